"""Single-track plant: lateral error dynamics, pose kinematics, speed loop,
path projection and the measurement delay line.

Sign conventions follow the error model exactly:
    dphi = path heading - vehicle heading
    d(dy)/dt = -ydot + vx * dphi
so ``dy`` is the lateral position of the path relative to the vehicle,
positive when the path lies to the vehicle's left.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import Pose, ReferencePath, VehicleParams, normalize_angle

VX_MIN_DYNAMIC = 0.5


@dataclass(frozen=True)
class LateralErrorState:
    dy: float = 0.0
    ydot: float = 0.0
    dphi: float = 0.0
    phidot: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dy, self.ydot, self.dphi, self.phidot])

    @classmethod
    def from_array(cls, x) -> "LateralErrorState":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    vx_at_build: float
    l_eff_at_build: float


def lateral_velocity_gain(vx: float, params: VehicleParams) -> float:
    """Steady-state lateral velocity per rad of front-wheel angle (ydot / delta_f)."""
    p = params
    num = p.Cf * vx * (-p.lf * p.m * vx**2 + p.Cr * p.lr**2 + p.Cr * p.lf * p.lr)
    den = -p.Cf * p.m * vx**2 * p.lf + p.Cr * p.m * vx**2 * p.lr + p.Cf * p.Cr * p.wheelbase**2
    if abs(den) < 1e-9:
        raise ValueError("critical speed: steady-state gain is singular")
    return num / den


def slip_gain(vx: float, params: VehicleParams) -> float:
    """beta = ydot / (delta_f * vx) at steady state."""
    if vx <= 0:
        raise ValueError("vx must be > 0")
    return lateral_velocity_gain(vx, params) / vx


def lateral_derivative(state, delta_f: float, phidot_des: float, vx: float, params: VehicleParams) -> np.ndarray:
    """Right-hand side of the 4-state lateral error model.

    Raises ValueError below VX_MIN_DYNAMIC; callers switch to kinematics there.
    """
    if vx < VX_MIN_DYNAMIC:
        raise ValueError(f"vx={vx} below dynamic-model threshold")
    x = state.as_array() if isinstance(state, LateralErrorState) else np.asarray(state, dtype=float)
    _, ydot, dphi, phidot = x
    p = params
    yddot = (
        -(p.Cf + p.Cr) / (vx * p.m) * ydot
        + (-vx - (p.Cf * p.lf - p.Cr * p.lr) / (vx * p.m)) * phidot
        + p.Cf / p.m * delta_f
    )
    phiddot = (
        -(p.Cf * p.lf - p.Cr * p.lr) / (p.Iz * vx) * ydot
        - (p.Cf * p.lf**2 + p.Cr * p.lr**2) / (p.Iz * vx) * phidot
        + p.Cf * p.lf / p.Iz * delta_f
    )
    return np.array([-ydot + vx * dphi, yddot, phidot_des - phidot, phiddot])


def build_state_space(vx: float, l_eff: float, params: VehicleParams) -> StateSpace:
    """Continuous (A, B, C, D) with inputs [delta_f, phidot_des] and outputs
    [dy, dphi, y_L2 slip-compensated, phidot]."""
    if vx < VX_MIN_DYNAMIC:
        raise ValueError(f"vx={vx} below dynamic-model threshold")
    if l_eff <= 0:
        raise ValueError("l_eff must be > 0")
    p = params
    a22 = -(p.Cf + p.Cr) / (vx * p.m)
    a24 = -vx - (p.Cf * p.lf - p.Cr * p.lr) / (vx * p.m)
    a42 = -(p.Cf * p.lf - p.Cr * p.lr) / (p.Iz * vx)
    a44 = -(p.Cf * p.lf**2 + p.Cr * p.lr**2) / (p.Iz * vx)
    A = np.array([
        [0.0, -1.0, vx, 0.0],
        [0.0, a22, 0.0, a24],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, a42, 0.0, a44],
    ])
    B = np.array([
        [0.0, 0.0],
        [p.Cf / p.m, 0.0],
        [0.0, 1.0],
        [p.Cf * p.lf / p.Iz, 0.0],
    ])
    C = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, l_eff, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    beta = slip_gain(vx, params)
    D = np.zeros((4, 2))
    D[2] = [-l_eff * beta, l_eff**2 / (2.0 * vx)]
    return StateSpace(A, B, C, D, vx, l_eff)


def preview_deviation(state, delta_f, phidot_des, vx, l_eff, params, dy_l2=None) -> float:
    """Slip-compensated preview deviation at distance ``l_eff``.

    ``dy_l2`` replaces the constant-curvature estimate of the future path
    offset ``l_eff**2 * phidot_des / (2 vx)`` when the caller has a better one.
    """
    s = state if isinstance(state, LateralErrorState) else LateralErrorState.from_array(state)
    if dy_l2 is None:
        dy_l2 = l_eff**2 * phidot_des / (2.0 * vx)
    return dy_l2 - slip_gain(vx, params) * l_eff * delta_f + s.dy + l_eff * s.dphi


def _kin_rhs(theta: float, v: float, delta_f: float, L: float) -> tuple[float, float, float]:
    return v * math.cos(theta), v * math.sin(theta), v * math.tan(delta_f) / L


def propagate_pose(pose: Pose, delta_f: float, v: float, Ts: float, params: VehicleParams) -> Pose:
    """One RK4 step of kinematic bicycle motion at speed ``v``."""
    if Ts <= 0:
        raise ValueError("Ts must be > 0")
    if abs(delta_f) >= math.radians(89.0):
        raise ValueError("steering angle too close to 90 deg")
    L = params.wheelbase
    X, Y, th = pose.X, pose.Y, pose.theta
    k1 = _kin_rhs(th, v, delta_f, L)
    k2 = _kin_rhs(th + 0.5 * Ts * k1[2], v, delta_f, L)
    k3 = _kin_rhs(th + 0.5 * Ts * k2[2], v, delta_f, L)
    k4 = _kin_rhs(th + Ts * k3[2], v, delta_f, L)
    w = Ts / 6.0
    X += w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    Y += w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    th += w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return Pose(X, Y, th, pose.v)


def nonholonomic_residual(theta: float, v: float, delta_f: float, params: VehicleParams) -> float:
    """Xdot*sin(theta) - Ydot*cos(theta) of the kinematic model (zero when
    the vehicle rolls without side slip)."""
    xd, yd, _ = _kin_rhs(theta, v, delta_f, params.wheelbase)
    return xd * math.sin(theta) - yd * math.cos(theta)


class DivergedFromPath(RuntimeError):
    pass


@dataclass(frozen=True)
class Projection:
    dy: float
    dphi: float
    kappa_ref: float
    v_ref: float
    s: float


class PathProjector:
    """Nearest-point projection by forward local search along the path."""

    def __init__(self, path: ReferencePath, guard: float = 10.0, lookahead: float = 15.0):
        self.path = path
        self.guard = guard
        self.lookahead = lookahead
        self._seg = 0
        self._dx = np.diff(path.x)
        self._dy = np.diff(path.y)
        self._len2 = self._dx**2 + self._dy**2

    def project(self, pose: Pose) -> Projection:
        p = self.path
        i0 = self._seg
        i1 = min(int(np.searchsorted(p.s, p.s[i0] + self.lookahead)) + 1, len(p) - 1)
        idx = np.arange(i0, i1)
        px = pose.X - p.x[idx]
        py = pose.Y - p.y[idx]
        t = np.clip((px * self._dx[idx] + py * self._dy[idx]) / self._len2[idx], 0.0, 1.0)
        ex = px - t * self._dx[idx]
        ey = py - t * self._dy[idx]
        d2 = ex**2 + ey**2
        k = int(np.argmin(d2))
        seg = int(idx[k])
        tk = float(t[k])
        self._seg = seg
        ds = p.s[seg + 1] - p.s[seg]
        s = float(p.s[seg] + tk * ds)
        # heading interpolated along the segment, measured as a chord blend
        h0, h1 = p.heading[seg], p.heading[seg + 1]
        heading = h0 + tk * normalize_angle(h1 - h0)
        nx, ny = -math.sin(heading), math.cos(heading)
        # vehicle offset along the path's left normal; dy is its negative
        off = float(px[k]) * nx + float(py[k]) * ny - tk * (self._dx[seg] * nx + self._dy[seg] * ny)
        dist = math.sqrt(float(d2[k]))
        if dist > self.guard:
            raise DivergedFromPath(f"{dist:.2f} m from the path at s={s:.1f}")
        kappa = float(p.curvature[seg] + tk * (p.curvature[seg + 1] - p.curvature[seg]))
        v_ref = float(p.v_ref[seg] + tk * (p.v_ref[seg + 1] - p.v_ref[seg]))
        return Projection(-off, normalize_angle(heading - pose.theta), kappa, v_ref, s)


def project_errors(pose: Pose, path: ReferencePath) -> Projection:
    """Stateless projection searching the whole path from its start."""
    return PathProjector(path, lookahead=math.inf).project(pose)


def longitudinal_step(v: float, v_ref: float, Ts: float, a_max: float, a_dec_max: float, k_v: float = 1.0) -> float:
    """First-order speed pursuit with acceleration and braking limits."""
    a = min(max(k_v * (v_ref - v), -a_dec_max), a_max)
    return max(v + a * Ts, 0.0)


class DelayLine:
    """Fixed-depth sample delay; during warm-up it returns the initial sample."""

    def __init__(self, T_delay: float, Ts: float, init=0.0):
        self.depth = int(round(T_delay / Ts))
        self._buf: deque = deque([init] * self.depth, maxlen=self.depth + 1)

    def push_pop(self, sample):
        if self.depth == 0:
            return sample
        self._buf.append(sample)
        return self._buf.popleft()


@dataclass
class PlantState:
    """Global pose plus body-frame lateral velocity and yaw rate."""

    X: float
    Y: float
    psi: float
    vx: float
    vy: float = 0.0
    r: float = 0.0

    @property
    def pose(self) -> Pose:
        return Pose(self.X, self.Y, self.psi, self.vx)


class BicyclePlant:
    """Linear-tyre single-track vehicle integrated with fixed-step RK4.

    Above VX_MIN_DYNAMIC the lateral velocity and yaw rate follow the 2-DOF
    dynamics and the pose is integrated from them; below it the plant falls
    back to kinematic motion with zero side slip.
    """

    def __init__(self, params: VehicleParams, state: PlantState, Ts: float = 0.005,
                 a_max: float = 2.0, a_dec_max: float = 4.0, k_v: float = 1.0):
        self.params = params
        self.state = state
        self.Ts = Ts
        self.a_max = a_max
        self.a_dec_max = a_dec_max
        self.k_v = k_v

    def _rhs(self, x: np.ndarray, delta_f: float, vx: float) -> np.ndarray:
        _, _, psi, vy, r = x
        p = self.params
        vyd = (-(p.Cf + p.Cr) / (vx * p.m) * vy
               + (-vx - (p.Cf * p.lf - p.Cr * p.lr) / (vx * p.m)) * r
               + p.Cf / p.m * delta_f)
        rd = (-(p.Cf * p.lf - p.Cr * p.lr) / (p.Iz * vx) * vy
              - (p.Cf * p.lf**2 + p.Cr * p.lr**2) / (p.Iz * vx) * r
              + p.Cf * p.lf / p.Iz * delta_f)
        c, s = math.cos(psi), math.sin(psi)
        return np.array([vx * c - vy * s, vx * s + vy * c, r, vyd, rd])

    def step(self, delta_f: float, v_cmd: float) -> PlantState:
        st = self.state
        Ts = self.Ts
        vx = st.vx
        if vx < VX_MIN_DYNAMIC:
            pose = propagate_pose(Pose(st.X, st.Y, st.psi, vx), delta_f, vx, Ts, self.params)
            r = vx * math.tan(delta_f) / self.params.wheelbase
            new = PlantState(pose.X, pose.Y, st.psi + normalize_angle(pose.theta - st.psi), vx, 0.0, r)
        else:
            x = np.array([st.X, st.Y, st.psi, st.vy, st.r])
            k1 = self._rhs(x, delta_f, vx)
            k2 = self._rhs(x + 0.5 * Ts * k1, delta_f, vx)
            k3 = self._rhs(x + 0.5 * Ts * k2, delta_f, vx)
            k4 = self._rhs(x + Ts * k3, delta_f, vx)
            x = x + Ts / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            new = PlantState(x[0], x[1], x[2], vx, x[3], x[4])
        new.vx = longitudinal_step(vx, v_cmd, Ts, self.a_max, self.a_dec_max, self.k_v)
        self.state = new
        return new
