"""Planner polyline -> drivable reference path.

Pipeline: chord-length natural cubic spline, piecewise quintic least squares
over fixed-size windows chained end to start, uniform arc-length resampling,
then heading and signed curvature by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .core import ReferencePath


class PathGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    """
    knot_spacing: planner vertices are thinned to about this arc spacing (m)
        before the spline; 0 keeps every vertex.
    spline_spacing: sample spacing of the cubic spline (m), i.e. the spacing
        of the points the quintic windows are fitted through.
    window: points per quintic window.
    continuity: derivative order matched at window joins (0 = shared point
        only, 1 also matches slope). Matching curvature as well is unstable:
        the end curvature of a least-squares quintic is noisy and the error
        grows window over window.
    resolution: spacing of the final reference path (m).
    max_rms: largest acceptable RMS fit residual of one window (m).
    """

    knot_spacing: float = 2.0
    spline_spacing: float = 1.5
    window: int = 10
    continuity: int = 1
    resolution: float = 0.5
    max_rms: float = 0.25

    def __post_init__(self) -> None:
        if self.knot_spacing < 0:
            raise ValueError("knot_spacing must be >= 0")
        if self.spline_spacing <= 0 or self.resolution <= 0:
            raise ValueError("spacings must be > 0")
        if self.window < 6:
            raise ValueError("window must hold at least 6 points for a quintic")
        if self.continuity not in (0, 1):
            raise ValueError("continuity must be 0 or 1")


@dataclass(frozen=True)
class SplineSegment:
    """Cubic x(t), y(t) on t in [0, 1]; coefficients in ascending powers."""

    cx: tuple[float, float, float, float]
    cy: tuple[float, float, float, float]

    def __call__(self, t, der: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        px = np.polynomial.polynomial.polyder(self.cx, der) if der else self.cx
        py = np.polynomial.polynomial.polyder(self.cy, der) if der else self.cy
        return np.stack(
            [np.polynomial.polynomial.polyval(t, px), np.polynomial.polynomial.polyval(t, py)], axis=-1
        )


def _chord_param(points: np.ndarray) -> np.ndarray:
    d = np.hypot(*np.diff(points, axis=0).T)
    if np.any(d < 1e-9):
        raise PathGeometryError("duplicate consecutive points")
    return np.concatenate([[0.0], np.cumsum(d)])


def _spline(points) -> tuple[CubicSpline, np.ndarray]:
    points = np.asarray(points, dtype=float)
    if len(points) < 4:
        raise PathGeometryError("need at least 4 points")
    t = _chord_param(points)
    return CubicSpline(t, points, bc_type="natural"), t


def spline_segments(points) -> list[SplineSegment]:
    """Per-interval coefficients of the chord-length natural spline,
    reparameterised to t in [0, 1]."""
    cs, t = _spline(points)
    segs = []
    for i, h in enumerate(np.diff(t)):
        # scipy: c[k, i] multiplies (u - t_i)^(3-k); substitute u - t_i = h * tau
        coef = cs.c[::-1, i, :] * (h ** np.arange(4))[:, None]
        segs.append(SplineSegment(tuple(coef[:, 0]), tuple(coef[:, 1])))
    return segs


def spline_interpolate(points, spacing: float) -> np.ndarray:
    """Natural cubic spline through ``points`` sampled every ``spacing`` of
    chord-length parameter."""
    cs, t = _spline(points)
    n = max(int(round(t[-1] / spacing)), 1) + 1
    return cs(np.linspace(0.0, t[-1], n))


@dataclass(frozen=True)
class QuinticPiece:
    """y = sum(coef[k] * u^k) in a window frame, u in [0, u_end].

    The frame is translated to ``origin`` and rotated by ``angle``; with
    ``angle == 0`` and zero origin it coincides with the input frame.
    """

    index: int
    coef: tuple[float, ...]
    origin: tuple[float, float]
    angle: float
    u_end: float
    rms: float

    def local(self, u) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(u, dtype=float), self.coef)

    def evaluate(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = self.local(u)
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.column_stack([self.origin[0] + c * u - s * v, self.origin[1] + s * u + c * v])

    def derivs_at(self, u: float) -> tuple[float, float, float]:
        p = np.polynomial.polynomial
        return (
            float(p.polyval(u, self.coef)),
            float(p.polyval(u, p.polyder(self.coef, 1))),
            float(p.polyval(u, p.polyder(self.coef, 2))),
        )


def _windows(n: int, window: int) -> list[tuple[int, int]]:
    step = window - 1
    out = []
    a = 0
    while a + window <= n:
        out.append((a, a + window))
        a += step
    if out and out[-1][1] < n:
        # fold the remainder into the last window
        out[-1] = (out[-1][0], n)
    elif not out:
        raise PathGeometryError(f"need at least {window} points, got {n}")
    return out


def _constrained_lstsq(V: np.ndarray, y: np.ndarray, E: np.ndarray | None, e: np.ndarray | None) -> np.ndarray:
    """min |V c - y| subject to E c = e."""
    if np.linalg.matrix_rank(V) < V.shape[1]:
        raise PathGeometryError("rank-deficient window (degenerate geometry)")
    if E is None or len(E) == 0:
        return np.linalg.lstsq(V, y, rcond=None)[0]
    k = V.shape[1]
    K = np.block([[2 * V.T @ V, E.T], [E, np.zeros((len(E), len(E)))]])
    rhs = np.concatenate([2 * V.T @ y, e])
    return np.linalg.solve(K, rhs)[:k]


def quintic_fit(points, window: int = 10, continuity: int = 0, local_frame: bool = True) -> list[QuinticPiece]:
    """Least-squares quintic per ``window``-point window.

    Consecutive windows share their boundary sample, and each window is
    forced through the previous window's fitted end point; ``continuity=1``
    additionally matches the slope there.
    """
    pts = np.asarray(points, dtype=float)
    pieces: list[QuinticPiece] = []
    # carried across joins: global end point and heading of the last piece
    join: tuple[np.ndarray, float] | None = None
    for idx, (a, b) in enumerate(_windows(len(pts), window)):
        w = pts[a:b].copy()
        if join is not None:
            w[0] = join[0]
        if local_frame:
            chord = w[-1] - w[0]
            ang = math.atan2(chord[1], chord[0])
            origin = w[0]
        else:
            ang, origin = 0.0, np.zeros(2)
        c, s = math.cos(ang), math.sin(ang)
        rel = w - origin
        u = c * rel[:, 0] + s * rel[:, 1]
        v = -s * rel[:, 0] + c * rel[:, 1]
        if np.any(np.diff(u) <= 0):
            raise PathGeometryError(f"window {idx}: chainage not increasing in window frame")
        scale = u[-1] - u[0] if u[-1] != u[0] else 1.0
        us = u / scale
        V = np.vander(us, 6, increasing=True)
        rows, vals = [], []
        if join is not None or local_frame:
            # pass through the window's first point (the previous fitted end)
            rows.append(np.vander([us[0]], 6, increasing=True)[0])
            vals.append(v[0])
        if join is not None and continuity >= 1:
            slope = math.tan(join[1] - ang)
            d1 = np.array([k * us[0] ** (k - 1) if k else 0.0 for k in range(6)]) / scale
            rows.append(d1)
            vals.append(slope)
        E = np.array(rows) if rows else None
        cs_ = _constrained_lstsq(V, v, E, np.array(vals) if rows else None)
        coef = cs_ / scale ** np.arange(6)
        resid = np.polynomial.polynomial.polyval(u, coef) - v
        piece = QuinticPiece(idx, tuple(float(x) for x in coef), (float(origin[0]), float(origin[1])),
                             ang, float(u[-1]), float(np.sqrt(np.mean(resid**2))))
        pieces.append(piece)
        _, y1, _ = piece.derivs_at(piece.u_end)
        join = (piece.evaluate([piece.u_end])[0], ang + math.atan(y1))
    return pieces


def evaluate_pieces(pieces: list[QuinticPiece], per_piece: int = 200) -> np.ndarray:
    out = []
    for i, pc in enumerate(pieces):
        u = np.linspace(0.0, pc.u_end, per_piece + 1)
        xy = pc.evaluate(u)
        out.append(xy if i == 0 else xy[1:])
    return np.vstack(out)


def resample(points, resolution: float) -> np.ndarray:
    """Uniform arc-length resampling of a dense polyline."""
    pts = np.asarray(points, dtype=float)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    n = max(int(round(s[-1] / resolution)), 1) + 1
    q = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(q, s, pts[:, 0]), np.interp(q, s, pts[:, 1])])


def compute_heading_curvature(path, resolution: float | None = None) -> ReferencePath:
    """Heading and signed curvature (CCW positive) from finite differences.

    Accepts an (N, 2) array or a ReferencePath; interior points use central
    differences, the two ends one-sided second-order differences.
    """
    if isinstance(path, ReferencePath):
        xy, res = path.xy, path.resolution
    else:
        xy = np.asarray(path, dtype=float)
        res = resolution
    if len(xy) < 3:
        raise PathGeometryError("need at least 3 points")
    d = np.hypot(*np.diff(xy, axis=0).T)
    if np.any(d < 1e-9):
        raise PathGeometryError("zero-length segment")
    s = np.concatenate([[0.0], np.cumsum(d)])
    x1 = np.gradient(xy[:, 0], s, edge_order=2)
    y1 = np.gradient(xy[:, 1], s, edge_order=2)
    x2 = np.gradient(x1, s, edge_order=2)
    y2 = np.gradient(y1, s, edge_order=2)
    heading = np.arctan2(y1, x1)
    kappa = (x1 * y2 - y1 * x2) / (x1**2 + y1**2) ** 1.5
    if res is None:
        res = float(np.median(d))
    z = np.zeros(len(s))
    return ReferencePath(s, xy[:, 0].copy(), xy[:, 1].copy(), heading, kappa, z, float(res))


def thin_vertices(points, spacing: float) -> np.ndarray:
    """Keep the first vertex at or past each multiple of ``spacing`` of arc
    length, always keeping both endpoints."""
    pts = np.asarray(points, dtype=float)
    if spacing <= 0 or len(pts) < 3:
        return pts
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    n = max(int(round(s[-1] / spacing)), 1)
    idx = np.unique(np.searchsorted(s, np.linspace(0.0, s[-1], n + 1)).clip(0, len(pts) - 1))
    idx[-1] = len(pts) - 1
    return pts[np.unique(idx)]


def smooth_path(polyline, cfg: SmoothingConfig = SmoothingConfig()) -> ReferencePath:
    """Full smoothing pipeline from planner vertices to a ReferencePath.

    Short polylines that cannot fill one quintic window skip that stage.
    """
    if isinstance(polyline, ReferencePath):
        polyline = polyline.xy
    pts = np.asarray(polyline, dtype=float)
    thinned = thin_vertices(pts, cfg.knot_spacing)
    if len(thinned) >= 4:
        pts = thinned
    if len(pts) < 4:
        # straight-line densification keeps the spline well posed
        seg = np.linspace(0.0, 1.0, 5)[:, None]
        pts = np.vstack([pts[i] + seg[:-1] * (pts[i + 1] - pts[i]) for i in range(len(pts) - 1)] + [pts[-1:]])
    dense = spline_interpolate(pts, cfg.spline_spacing)
    if len(dense) >= cfg.window:
        pieces = quintic_fit(dense, cfg.window, cfg.continuity)
        worst = max(p.rms for p in pieces)
        if worst > cfg.max_rms:
            raise PathGeometryError(f"quintic residual RMS {worst:.3f} m above {cfg.max_rms} m")
        dense = evaluate_pieces(pieces)
    else:
        dense = spline_interpolate(pts, cfg.resolution / 20.0)
    return compute_heading_curvature(resample(dense, cfg.resolution), cfg.resolution)
