"""Reference speed assignment from curvature limits and braking feasibility."""

from __future__ import annotations

import math

import numpy as np

from .core import ReferencePath, Scenario, VehicleParams

KAPPA_EPS = 1e-6
LAT_ACCEL_LINEAR = 0.4  # fraction of g that keeps the tyres linear


def dynamic_speed_limit(kappa: float, params: VehicleParams, lambda_d: float) -> float:
    """Adhesion-limited curve speed lambda_d * sqrt(g * mu / |kappa|)."""
    if not 0 < lambda_d <= 1:
        raise ValueError("lambda_d must lie in (0, 1]")
    k = abs(kappa)
    if k < KAPPA_EPS:
        return math.inf
    return lambda_d * math.sqrt(params.g * params.mu / k)


def kinematic_speed_limit(kappa: float, params: VehicleParams) -> float:
    """No-side-slip speed limit of the Ackermann kinematic model."""
    k = abs(kappa)
    if k < KAPPA_EPS:
        return math.inf
    L = params.wheelbase
    R = 1.0 / k
    if R <= L:
        raise ValueError("turn radius below wheelbase")
    return math.sqrt(params.mu * params.g * math.sqrt(1.0 + L**2 * k**2) * math.sqrt(R**2 - L**2))


def front_wheel_limit(vx: float, params: VehicleParams, r_min: float) -> float:
    """Largest front-wheel angle keeping lateral acceleration <= 0.4 g and
    the turn radius >= ``r_min``."""
    L = params.wheelbase
    geometric = L / r_min
    if vx <= 0:
        return geometric
    return min(LAT_ACCEL_LINEAR * params.g * L / vx**2, geometric)


def understeer_diagnostics(vx: float, params: VehicleParams) -> dict[str, float]:
    """Understeer gradient and steady yaw-rate gain; informational only."""
    return {"K": params.understeer_gradient, "yaw_rate_gain": params.yaw_rate_gain(vx)}


def limits(kappa: np.ndarray, params: VehicleParams, lambda_d: float, v_set: float) -> np.ndarray:
    """Per-point min(v_set, v_dyn, v_kin)."""
    out = np.empty(len(kappa))
    for i, k in enumerate(kappa):
        out[i] = min(v_set, dynamic_speed_limit(k, params, lambda_d), kinematic_speed_limit(k, params))
    return out


def backward_pass(v: np.ndarray, s: np.ndarray, a_dec_max: float) -> np.ndarray:
    """Clip ``v`` so every point can brake down to its successor."""
    v = np.array(v, dtype=float)
    if math.isinf(a_dec_max):
        return v
    ds = np.diff(s)
    for i in range(len(v) - 2, -1, -1):
        cap = math.sqrt(v[i + 1] ** 2 + 2.0 * a_dec_max * ds[i])
        if v[i] > cap:
            v[i] = cap
    return v


def assign_reference_speeds(
    path: ReferencePath,
    scenario: Scenario,
    params: VehicleParams = VehicleParams(),
    a_dec_max: float = 2.5,
) -> ReferencePath:
    """Fill ``v_ref``: curvature and legal caps, stop at the goal, then the
    braking-feasibility backward pass."""
    v = limits(path.curvature, params, scenario.lambda_d, scenario.v_set)
    v[-1] = 0.0
    return path.with_columns(v_ref=backward_pass(v, path.s, a_dec_max))
