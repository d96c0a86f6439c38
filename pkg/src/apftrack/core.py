"""Shared domain types.

All quantities are SI internally (m, s, rad, kg). Unit conversion from
km/h and degrees happens only in :mod:`apftrack.config`.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

KMH = 1.0 / 3.6
MAX_STEER = math.radians(25.0)


class ValidationError(ValueError):
    """A domain invariant was violated."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


def normalize_angle(a: float) -> float:
    """Wrap ``a`` into (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    w = math.fmod(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    elif w > math.pi:
        w -= 2.0 * math.pi
    return w


@dataclass(frozen=True)
class VehicleParams:
    """Single-track vehicle parameters.

    Cf and Cr are per-axle cornering stiffnesses (N/rad).
    """

    m: float = 1500.0
    Iz: float = 2500.0
    lf: float = 1.2
    lr: float = 1.5
    Cf: float = 80000.0
    Cr: float = 80000.0
    steer_ratio: float = 16.0
    mu: float = 0.85
    g: float = 9.81

    def __post_init__(self) -> None:
        for name in ("m", "Iz", "lf", "lr", "Cf", "Cr"):
            _require(getattr(self, name) > 0, f"{name} must be > 0")
        _require(0 < self.mu <= 1.2, "mu must lie in (0, 1.2]")
        _require(self.steer_ratio >= 1, "steer_ratio must be >= 1")
        _require(self.g > 0, "g must be > 0")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    @property
    def understeer_gradient(self) -> float:
        """K such that steady yaw gain is (vx/L) / (1 + K vx^2)."""
        return self.m / self.wheelbase**2 * (self.lr / self.Cf - self.lf / self.Cr)

    def yaw_rate_gain(self, vx: float) -> float:
        """Steady-state yaw rate per rad of front-wheel angle."""
        return (vx / self.wheelbase) / (1.0 + self.understeer_gradient * vx**2)


@dataclass(frozen=True)
class Pose:
    X: float
    Y: float
    theta: float
    v: float = 0.0

    def __post_init__(self) -> None:
        _require(math.isfinite(self.X) and math.isfinite(self.Y), "pose position must be finite")
        _require(self.v >= 0, "pose speed must be >= 0")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.X, self.Y])


@dataclass(frozen=True)
class PathPoint:
    s: float
    X: float
    Y: float
    heading: float
    curvature: float
    v_ref: float


@dataclass(eq=False)
class ReferencePath:
    """Arc-length indexed path samples stored column-wise.

    Headings, curvatures and reference speeds are zero until the smoothing
    pipeline and speed planner populate them.
    """

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    v_ref: np.ndarray
    resolution: float

    @classmethod
    def from_xy(cls, xy: np.ndarray, resolution: float) -> "ReferencePath":
        xy = np.asarray(xy, dtype=float)
        d = np.hypot(*np.diff(xy, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(d)])
        heading = np.zeros(len(xy))
        if len(xy) > 1:
            chord = np.arctan2(np.diff(xy[:, 1]), np.diff(xy[:, 0]))
            heading[:-1] = chord
            heading[-1] = chord[-1]
        z = np.zeros(len(xy))
        return cls(s, xy[:, 0].copy(), xy[:, 1].copy(), heading, z, z.copy(), float(resolution))

    def __len__(self) -> int:
        return len(self.s)

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def points(self) -> list[PathPoint]:
        return [
            PathPoint(*(float(v) for v in row))
            for row in zip(self.s, self.x, self.y, self.heading, self.curvature, self.v_ref)
        ]

    def with_columns(self, **cols) -> "ReferencePath":
        data = {k: getattr(self, k) for k in ("s", "x", "y", "heading", "curvature", "v_ref")}
        data.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
        return ReferencePath(resolution=self.resolution, **data)

    def validate(self) -> None:
        """Raise ValidationError unless the path invariants hold."""
        _require(len(self) >= 2, "path needs at least 2 points")
        ds = np.diff(self.s)
        _require(bool(np.all(ds > 0)), "arc length must be strictly increasing")
        lo, hi = 0.25 * self.resolution, 4.0 * self.resolution
        _require(bool(np.all((ds >= lo) & (ds <= hi))), "point spacing outside [0.25, 4] x resolution")
        _require(bool(np.all(np.isfinite(self.curvature))), "curvature must be finite")
        _require(bool(np.all(self.v_ref >= 0)), "v_ref must be >= 0")
        chord = np.arctan2(np.diff(self.y), np.diff(self.x))
        err = np.abs(np.angle(np.exp(1j * (chord - self.heading[:-1]))))
        _require(bool(np.all(err <= math.radians(30.0))), "heading departs from chord by > 30 deg")

    def interp(self, s: float, column: str) -> float:
        return float(np.interp(s, self.s, getattr(self, column)))

    def digest(self, geometry_only: bool = False) -> str:
        """Stable content hash, used to confirm several runs share one path.

        With ``geometry_only`` the speed column is left out, so paths that
        differ only in their speed profile hash equal.
        """
        h = hashlib.sha256()
        cols = [self.s, self.x, self.y, self.heading, self.curvature]
        if not geometry_only:
            cols.append(self.v_ref)
        for col in cols:
            h.update(np.ascontiguousarray(col, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class Obstacle:
    cx: float
    cy: float
    r: float
    q_star: float | None = None
    eta: float = 15.0

    def __post_init__(self) -> None:
        if self.q_star is None:
            object.__setattr__(self, "q_star", self.r + 3.0)
        _require(self.r > 0, "r must be > 0")
        _require(self.q_star > self.r, "q_star must exceed r")
        _require(self.eta > 0, "eta must be > 0")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def inflated(self, margin: float) -> "Obstacle":
        """Grow the body radius by ``margin``; the influence band is kept."""
        return Obstacle(self.cx, self.cy, self.r + margin, self.q_star + margin, self.eta)


class Controller(str, enum.Enum):
    CC = "cc"
    MPC = "mpc"


@dataclass(frozen=True)
class Bounds:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self) -> None:
        _require(self.xmin < self.xmax and self.ymin < self.ymax, "bounds must have positive extent")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class SimSettings:
    Ts: float = 0.005
    T_end: float = 120.0
    T_delay: float = 0.065

    def __post_init__(self) -> None:
        _require(self.Ts > 0, "Ts must be > 0")
        _require(self.T_end > 0, "T_end must be > 0")
        _require(self.T_delay >= 0, "T_delay must be >= 0")


@dataclass(frozen=True)
class Scenario:
    start: Pose
    goal: tuple[float, float]
    obstacles: tuple[Obstacle, ...] = ()
    v_set: float = 30.0 * KMH
    lambda_d: float = 0.65
    bounds: Bounds = field(default_factory=lambda: Bounds(-1e4, 1e4, -1e4, 1e4))
    controller: Controller = Controller.MPC
    sim: SimSettings = field(default_factory=SimSettings)

    def __post_init__(self) -> None:
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "controller", Controller(self.controller))
        _require(self.bounds.contains(*self.goal), "goal must lie inside bounds")
        _require(self.bounds.contains(self.start.X, self.start.Y), "start must lie inside bounds")
        _require(self.v_set > 0, "v_set must be > 0")
        _require(0 < self.lambda_d <= 1, "lambda_d must lie in (0, 1]")


@dataclass(frozen=True)
class ControlCommand:
    delta_f: float
    v_ref: float

    def __post_init__(self) -> None:
        _require(abs(self.delta_f) <= MAX_STEER + 1e-12, "|delta_f| exceeds 25 deg")
        _require(self.v_ref >= 0, "v_ref must be >= 0")
