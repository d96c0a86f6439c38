"""Linear MPC on the lateral error model.

The decision vector is the stack of Nc steering increments, optionally
followed by one slack variable that softens the lateral-deviation rows.
The path yaw rate is a known disturbance: it is pushed through the second
input column of the model and folded into the tracking error.

Output convention for the stacked prediction (i = 1..Np):

    z(k+i) = C x(k+i) + D u(k+i-1)

so the input that is held over a sample interval also feeds the outputs
sampled at the end of it.  Inputs are held at their last value beyond Nc.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .cc import curvature_gain
from .core import ControlCommand, ReferencePath, VehicleParams
from .plant import LateralErrorState, Projection, StateSpace, build_state_space, slip_gain
from .qp import QpInfeasible, QpResult, QpWarning, solve_qp

OUT_DY, OUT_DPHI, OUT_YL2, OUT_PHIDOT = range(4)


class MpcConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MpcConfig:
    T: float = 0.05
    Np: int = 25
    Nc: int = 10
    q_diag: tuple = (2000.0, 1000.0, 1000.0, 1000.0)
    Ru: float = 0.0
    R: float = 1.5e5
    slack_weight: float = 1000.0
    du_bound: float = math.radians(0.47)
    u_bound: float = math.radians(20.0)
    output_dev_bound: float = 0.5
    yaw_accel_factor: float = 0.85
    preview_time: float = 1.0
    l_eff_min: float = 2.0
    vx_min: float = 1.0
    # "steady": each output is referenced to its value on a steady turn of
    # the predicted curvature; "zero": deviations referenced to zero
    reference: str = "steady"
    max_iter: int = 500
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.T <= 0:
            raise MpcConfigError("T must be > 0")
        if not 1 <= self.Nc <= self.Np:
            raise MpcConfigError("need 1 <= Nc <= Np")
        if len(self.q_diag) != 4 or min(self.q_diag) < 0:
            raise MpcConfigError("q_diag must hold 4 non-negative weights")
        if self.Ru < 0 or self.R < 0 or self.slack_weight <= 0:
            raise MpcConfigError("weights must be non-negative (slack weight > 0)")
        if min(self.du_bound, self.u_bound, self.output_dev_bound) <= 0:
            raise MpcConfigError("bounds must be positive")
        if self.reference not in ("steady", "zero"):
            raise MpcConfigError("reference must be 'steady' or 'zero'")

    def Q_block(self, m: int = 4) -> np.ndarray:
        return np.diag(self.q_diag[:m])


@dataclass(frozen=True)
class DiscreteModel:
    Ad: np.ndarray
    Bd: np.ndarray
    C: np.ndarray
    D: np.ndarray
    T: float


def discretize(ss, T: float) -> DiscreteModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if T <= 0:
        raise ValueError("T must be > 0")
    A = np.atleast_2d(np.asarray(ss.A, dtype=float))
    B = np.asarray(ss.B, dtype=float).reshape(A.shape[0], -1)
    n, l = B.shape
    aug = np.zeros((n + l, n + l))
    aug[:n, :n] = A
    aug[:n, n:] = B
    E = expm(aug * T)
    return DiscreteModel(E[:n, :n], E[:n, n:], np.atleast_2d(ss.C), np.atleast_2d(ss.D), T)


@dataclass(frozen=True)
class PredictionMatrices:
    H: np.ndarray
    P: np.ndarray
    S: np.ndarray
    Gamma: np.ndarray
    Lam: np.ndarray
    Sw: np.ndarray  # known-disturbance map over Np steps (empty if none)
    Np: int
    Nc: int

    @property
    def m(self) -> int:
        return self.H.shape[0] // self.Np

    def predict(self, x, u_prev, dU, w=None) -> np.ndarray:
        z = self.H @ np.asarray(x, float) + self.P @ np.atleast_1d(u_prev) + self.S @ np.asarray(dU, float)
        if w is not None and self.Sw.size:
            z = z + self.Sw @ np.asarray(w, float)
        return z


def build_prediction(dm: DiscreteModel, Np: int, Nc: int, n_control: int = 1) -> PredictionMatrices:
    """Stacked prediction over Np steps with Nc free increments.

    The first ``n_control`` input columns are decision channels; any
    remaining columns are known disturbances and go into ``Sw``.
    """
    if not 1 <= Nc <= Np:
        raise ValueError("need 1 <= Nc <= Np")
    Ad, C = dm.Ad, dm.C
    n = Ad.shape[0]
    m = C.shape[0]
    l = n_control
    Bu, Bw = dm.Bd[:, :l], dm.Bd[:, l:]
    Du, Dw = dm.D[:, :l], dm.D[:, l:]
    lw = Bw.shape[1]

    powers = [np.eye(n)]
    for _ in range(Np):
        powers.append(Ad @ powers[-1])
    # G[j] = C Ad^j Bu : response at i of an input applied over step i-1-j
    Gu = [C @ powers[j] @ Bu for j in range(Np)]
    Gw = [C @ powers[j] @ Bw for j in range(Np)]

    H = np.vstack([C @ powers[i] for i in range(1, Np + 1)])
    P = np.zeros((m * Np, l))
    S = np.zeros((m * Np, l * Nc))
    Sw = np.zeros((m * Np, lw * Np))
    for i in range(1, Np + 1):
        rows = slice(m * (i - 1), m * i)
        # step response from u applied at every step 0..i-1, plus feedthrough
        P[rows] = sum(Gu[: i]) + Du
        for c in range(min(i, Nc)):
            # increment c is active from step c through i-1
            S[rows, l * c:l * (c + 1)] = sum(Gu[: i - c]) + Du
        for j in range(i):
            Sw[rows, lw * j:lw * (j + 1)] = Gw[i - 1 - j]
        if lw:
            Sw[rows, lw * (i - 1):lw * i] += Dw
    Gamma = np.vstack([np.eye(l)] * Nc)
    Lam = np.kron(np.tril(np.ones((Nc, Nc))), np.eye(l))
    return PredictionMatrices(H, P, S, Gamma, Lam, Sw, Np, Nc)


@dataclass
class QpProblem:
    Nmat: np.ndarray
    Mvec: np.ndarray
    const: float = 0.0
    Aineq: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    bineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_slack: int = 0
    row_families: dict = field(default_factory=dict)

    def objective(self, x) -> float:
        x = np.asarray(x, float)
        return float(self.const - x @ self.Mvec + x @ self.Nmat @ x)


def _block_weights(w, blocks: int) -> np.ndarray:
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return np.kron(np.eye(blocks), w)


def build_cost(pm: PredictionMatrices, eps, u_prev, cfg_or_weights) -> QpProblem:
    """M = 2 S'Q eps - 2 Lam'Ru Gamma u,  N = Lam'Ru Lam + R + S'QS.

    ``cfg_or_weights`` is an MpcConfig or a tuple (Qblock, Ru, R) of
    per-step weights that get replicated along the horizon.
    """
    if isinstance(cfg_or_weights, MpcConfig):
        Qb, Ru, Rw = cfg_or_weights.Q_block(pm.m), cfg_or_weights.Ru, cfg_or_weights.R
    else:
        Qb, Ru, Rw = cfg_or_weights
    l = pm.Gamma.shape[1]
    Q = _block_weights(Qb, pm.Np)
    Rub = _block_weights(np.atleast_2d(Ru) * np.eye(l) if np.ndim(Ru) == 0 else Ru, pm.Nc)
    Rb = _block_weights(np.atleast_2d(Rw) * np.eye(l) if np.ndim(Rw) == 0 else Rw, pm.Nc)
    eps = np.asarray(eps, float)
    u = np.atleast_1d(np.asarray(u_prev, float))
    S, Lam, Gam = pm.S, pm.Lam, pm.Gamma
    M = 2.0 * S.T @ Q @ eps - 2.0 * Lam.T @ Rub @ Gam @ u
    N = Lam.T @ Rub @ Lam + Rb + S.T @ Q @ S
    N = 0.5 * (N + N.T)
    if np.min(np.linalg.eigvalsh(N)) <= 0:
        raise MpcConfigError("N is not positive definite")
    const = float(eps @ Q @ eps + (Gam @ u) @ Rub @ (Gam @ u))
    return QpProblem(N, M, const)


def build_constraints(pm: PredictionMatrices, qp: QpProblem, z_free, u_prev, cfg: MpcConfig,
                      yaw_rate_bound: float | None = None) -> QpProblem:
    """Append increment, input, softened deviation and hard yaw-rate rows.

    ``z_free`` is the stacked output prediction with zero increments.  The
    slack column is added to Aineq and to the cost with weight
    ``cfg.slack_weight``.
    """
    Nc, Np, m = pm.Nc, pm.Np, pm.m
    nv = Nc + 1
    u = float(np.atleast_1d(u_prev)[0])
    I = np.eye(Nc)
    rows, rhs, fam = [], [], {}

    def add(name, A, b):
        start = sum(len(r) for r in rows)
        rows.append(A)
        rhs.append(b)
        fam[name] = (start, start + len(A))

    pad = np.zeros((Nc, 1))
    add("du", np.vstack([np.hstack([I, pad]), np.hstack([-I, pad])]),
        np.full(2 * Nc, cfg.du_bound))
    L = pm.Lam
    add("u", np.vstack([np.hstack([L, pad]), np.hstack([-L, pad])]),
        np.concatenate([np.full(Nc, cfg.u_bound - u), np.full(Nc, cfg.u_bound + u)]))
    idx = np.arange(Np) * m + OUT_DY
    Sdy = pm.S[idx]
    zdy = np.asarray(z_free)[idx]
    ones = -np.ones((Np, 1))
    add("dy", np.vstack([np.hstack([Sdy, ones]), np.hstack([-Sdy, ones])]),
        np.concatenate([cfg.output_dev_bound - zdy, cfg.output_dev_bound + zdy]))
    if yaw_rate_bound is not None:
        idx = np.arange(Np) * m + OUT_PHIDOT
        Sr = pm.S[idx]
        zr = np.asarray(z_free)[idx]
        zero = np.zeros((Np, 1))
        add("yaw", np.vstack([np.hstack([Sr, zero]), np.hstack([-Sr, zero])]),
            np.concatenate([yaw_rate_bound - zr, yaw_rate_bound + zr]))
    e = np.zeros((1, nv))
    e[0, -1] = -1.0
    add("slack", e, np.zeros(1))

    N = np.zeros((nv, nv))
    N[:Nc, :Nc] = qp.Nmat
    N[-1, -1] = cfg.slack_weight
    M = np.concatenate([qp.Mvec, [0.0]])
    return QpProblem(N, M, qp.const, np.vstack(rows), np.concatenate(rhs), 1, fam)


def expected_row_count(Nc: int, Np: int, n_soft: int = 1, n_hard: int = 1) -> int:
    return 2 * (Nc + Nc + Np * n_soft + Np * n_hard) + 1


@dataclass
class MpcOutput:
    command: ControlCommand
    dU: np.ndarray
    sigma: float
    cost: float
    qp: QpResult
    infeasible_fallback: bool = False


def reference_stack(kappas: np.ndarray, vx: float, l_eff: float, params: VehicleParams, mode: str) -> np.ndarray:
    """Stacked output reference along the horizon for the given curvatures."""
    r = np.zeros((len(kappas), 4))
    r[:, OUT_PHIDOT] = vx * kappas
    if mode == "steady":
        delta_ss = curvature_gain(vx, params) * kappas
        r[:, OUT_DPHI] = slip_gain(vx, params) * delta_ss
        r[:, OUT_YL2] = 0.5 * l_eff**2 * kappas
    return r.reshape(-1)


def horizon_curvature(path: ReferencePath, s0: float, vx: float, T: float, Np: int) -> np.ndarray:
    s = np.minimum(s0 + vx * T * np.arange(1, Np + 1), path.length)
    return np.interp(s, path.s, path.curvature)


def mpc_step(state: LateralErrorState, vx: float, proj: Projection, path: ReferencePath,
              cfg: MpcConfig, params: VehicleParams, u_prev: float, lam0=None) -> MpcOutput:
    """One receding-horizon update; returns the command for the next period."""
    v = max(vx, cfg.vx_min)
    l_eff = max(v * cfg.preview_time, cfg.l_eff_min)
    ss = build_state_space(v, l_eff, params)
    dm = discretize(ss, cfg.T)
    pm = build_prediction(dm, cfg.Np, cfg.Nc, n_control=1)

    kap_path = horizon_curvature(path, proj.s, v, cfg.T, cfg.Np)
    # disturbance over step j uses the curvature at its start
    kap_w = np.concatenate([[proj.kappa_ref], kap_path[:-1]])
    w = v * kap_w
    x = state.as_array()
    z_free = pm.predict(x, [u_prev], np.zeros(cfg.Nc), w)
    ref = reference_stack(kap_path, v, l_eff, params, cfg.reference)
    eps = ref - z_free
    base = build_cost(pm, eps, [u_prev], cfg)
    yaw_bound = cfg.yaw_accel_factor * params.mu * params.g / v
    qp = build_constraints(pm, base, z_free, [u_prev], cfg, yaw_bound)
    fallback = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QpWarning)
        try:
            res = solve_qp(qp.Mvec, qp.Nmat, qp.Aineq, qp.bineq, lam0=lam0,
                           max_iter=cfg.max_iter, tol=cfg.tol)
        except QpInfeasible:
            # hard yaw-rate rows conflict with the increment bounds; drop them
            qp = build_constraints(pm, base, z_free, [u_prev], cfg, None)
            res = solve_qp(qp.Mvec, qp.Nmat, qp.Aineq, qp.bineq,
                           max_iter=cfg.max_iter, tol=cfg.tol)
            fallback = True
    dU = res.x[: cfg.Nc]
    sigma = max(float(res.x[-1]), 0.0)
    du0 = min(max(float(dU[0]), -cfg.du_bound), cfg.du_bound)
    u = min(max(u_prev + du0, -cfg.u_bound), cfg.u_bound)
    return MpcOutput(ControlCommand(u, proj.v_ref), dU, sigma, qp.objective(res.x), res, fallback)


class MpcController:
    """Stateful wrapper: remembers the applied input and the QP multipliers."""

    def __init__(self, cfg: MpcConfig, params: VehicleParams):
        self.cfg = cfg
        self.params = params
        self.u_prev = 0.0
        self._lam = None
        self.last: MpcOutput | None = None
        self.qp_warnings = 0
        self.infeasible_ticks = 0

    def step(self, state: LateralErrorState, vx: float, proj: Projection, path: ReferencePath) -> ControlCommand:
        out = mpc_step(state, vx, proj, path, self.cfg, self.params, self.u_prev, self._lam)
        self._lam = None if out.infeasible_fallback else out.qp.lam
        self.qp_warnings += int(not out.qp.converged)
        self.infeasible_ticks += int(out.infeasible_fallback)
        self.u_prev = out.command.delta_f
        self.last = out
        return out.command
