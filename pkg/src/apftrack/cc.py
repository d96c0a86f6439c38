"""Curvature-calculation (CC) lateral controller.

Two curvature demands are summed and converted to a front-wheel angle with
the steady-state curvature gain of the single-track model:

* an integral loop on the delayed current deviation ``dy``;
* a preview loop on the delayed, slip-compensated preview deviation at
  ``l_eff = v_ref * Tp``, with the preview time from the fuzzy scheduler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import MAX_STEER, ControlCommand, ReferencePath, VehicleParams
from .fuzzy import FuzzyPreviewConfig, fuzzy_preview_time
from .plant import VX_MIN_DYNAMIC, DelayLine, LateralErrorState, Projection, preview_deviation, slip_gain

INTEGRATOR_CLAMP = 0.2  # 1/m


@dataclass(frozen=True)
class CcConfig:
    Ki: float = 0.0005
    Kp: float = 0.0
    Kd: float = 0.0
    g_out: float = 0.8
    g_out_aggressive: float = 0.65
    local_offset_limit: float = 0.2
    T_delay: float = 0.065
    a_lat_limit_threshold: float = 0.4 * 9.81
    l_eff_min: float = 1.0
    fuzzy: FuzzyPreviewConfig = field(default_factory=FuzzyPreviewConfig)

    def __post_init__(self) -> None:
        if self.Ki <= 0:
            raise ValueError("Ki must be > 0")
        for name in ("g_out", "g_out_aggressive"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.local_offset_limit <= 0:
            raise ValueError("local_offset_limit must be > 0")
        if self.T_delay < 0:
            raise ValueError("T_delay must be >= 0")


@dataclass
class Integrator:
    total: float = 0.0
    last_dy: float = 0.0


def current_deviation_curvature(dy: float, cfg: CcConfig, state: Integrator, period: float) -> tuple[float, Integrator]:
    """PID curvature on the current deviation; the integral is a true
    (period-scaled) integral, frozen while |dy| exceeds the local offset
    limit and clamped for anti-windup."""
    total = state.total
    if abs(dy) <= cfg.local_offset_limit:
        total += cfg.Ki * dy * period
        total = min(max(total, -INTEGRATOR_CLAMP), INTEGRATOR_CLAMP)
    kappa = cfg.Kp * dy + total + cfg.Kd * (dy - state.last_dy)
    return kappa, Integrator(total, dy)


def preview_curvature(y_l2_slipcomp: float, l_eff: float, g_out: float) -> float:
    if l_eff <= 0:
        raise ValueError("l_eff must be > 0")
    return g_out * 2.0 * y_l2_slipcomp / l_eff**2


def slip_compensate(y_l2: float, l_eff: float, delta_steeringwheel: float, vx: float, params: VehicleParams) -> float:
    """Remove the body side-slip contribution from a preview deviation."""
    lateral_gain = slip_gain(vx, params) * vx
    slope = lateral_gain / vx * delta_steeringwheel / params.steer_ratio
    return y_l2 - slope * l_eff


def curvature_gain(vx: float, params: VehicleParams) -> float:
    """Steady-state front-wheel angle per unit path curvature."""
    p = params
    num = -p.Cf * p.m * vx**2 * p.lf + p.Cr * p.m * vx**2 * p.lr + p.Cf * p.Cr * p.wheelbase**2
    den = p.Cf * p.Cr * p.wheelbase
    if abs(num) < 1e-9:
        raise ValueError("curvature gain singular")
    return num / den


def curvature_to_steering(kappa: float, vx: float, params: VehicleParams) -> float:
    return curvature_gain(vx, params) * kappa


class CcController:
    """Stateful CC controller, stepped once per control period."""

    def __init__(self, cfg: CcConfig, params: VehicleParams, period: float):
        self.cfg = cfg
        self.params = params
        self.period = period
        self.integrator = Integrator()
        self.dy_delay = DelayLine(cfg.T_delay, period, 0.0)
        self.yl2_delay = DelayLine(cfg.T_delay, period, 0.0)
        self.delta_f = 0.0
        self.last = {}

    def step(self, proj: Projection, ydot: float, phidot: float, vx: float,
             path: ReferencePath) -> ControlCommand:
        cfg, p = self.cfg, self.params
        v_model = max(vx, VX_MIN_DYNAMIC)
        tp = fuzzy_preview_time(abs(proj.dy), abs(proj.kappa_ref), cfg.fuzzy)
        l_eff = max(proj.v_ref * tp, cfg.l_eff_min)

        s_prev = min(proj.s + l_eff, path.length)
        kappa_prev = path.interp(s_prev, "curvature")
        a_lat_demand = v_model**2 * abs(kappa_prev)
        g_out = cfg.g_out if a_lat_demand <= cfg.a_lat_limit_threshold else cfg.g_out_aggressive

        state = LateralErrorState(proj.dy, ydot, proj.dphi, phidot)
        phidot_des = v_model * proj.kappa_ref
        y_l2 = preview_deviation(state, 0.0, phidot_des, v_model, l_eff, p)
        y_l2_sc = slip_compensate(y_l2, l_eff, self.delta_f * p.steer_ratio, v_model, p)

        dy_d = self.dy_delay.push_pop(proj.dy)
        y_l2_d = self.yl2_delay.push_pop(y_l2_sc)

        k_dy, self.integrator = current_deviation_curvature(dy_d, cfg, self.integrator, self.period)
        k_l2 = preview_curvature(y_l2_d, l_eff, g_out)
        delta = curvature_to_steering(k_dy + k_l2, v_model, p)
        self.delta_f = min(max(delta, -MAX_STEER), MAX_STEER)
        self.last = {"Tp": tp, "y_l2": y_l2_sc, "g_out": g_out, "l_eff": l_eff}
        return ControlCommand(self.delta_f, proj.v_ref)
