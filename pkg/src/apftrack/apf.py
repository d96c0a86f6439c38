"""Improved artificial potential field planner.

The repulsive field is scaled by the squared goal distance so that obstacles
near the goal cannot pin the vehicle away from it, and the radial component
of the repulsive force is re-pointed along the obstacle tangent that makes at
most 90 degrees with the attraction, which lets the descent slide around an
obstacle instead of stalling in front of it.

Distances to obstacles are edge distances (center distance minus radius).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Obstacle, ReferencePath, Scenario, ValidationError


class CollisionError(ValueError):
    """Position lies inside an obstacle body."""


class PlannerError(RuntimeError):
    """Descent failed; ``path`` holds the vertices visited so far."""

    def __init__(self, msg: str, path: np.ndarray):
        super().__init__(msg)
        self.path = path


class StallDetected(PlannerError):
    pass


class IterationCap(PlannerError):
    pass


@dataclass(frozen=True)
class ApfConfig:
    """Planner settings.

    Attributes:
        xi: attractive coefficient.
        step: descent step length (m).
        max_iters: iteration cap.
        goal_tol: arrival tolerance (m).
        stall_window: iterations over which goal progress is measured.
        stall_eps: minimum goal-distance decrease over the window (m).
        vehicle_radius: circumscribed vehicle radius added to every obstacle (m).
        tangent_rule: re-point the radial repulsion along the obstacle tangent.
            Disabling it gives the classic radial field, kept as a baseline.
    """

    xi: float = 1.0
    step: float = 0.5
    max_iters: int = 5000
    goal_tol: float = 0.5
    stall_window: int = 60
    stall_eps: float = 0.5
    vehicle_radius: float = 1.5
    tangent_rule: bool = True

    def __post_init__(self) -> None:
        for name in ("xi", "step", "max_iters", "goal_tol", "stall_window", "stall_eps"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if self.vehicle_radius < 0:
            raise ValidationError("vehicle_radius must be >= 0")
        if not self.goal_tol < self.step * self.max_iters:
            raise ValidationError("goal_tol must be < step * max_iters")


def _as_xy(p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(2)


def edge_distance(p, ob: Obstacle) -> float:
    return math.hypot(p[0] - ob.cx, p[1] - ob.cy) - ob.r


def attractive_force(p, goal, xi: float) -> np.ndarray:
    """Negative gradient of 0.5 * xi * |p - goal|^2."""
    return xi * (_as_xy(goal) - _as_xy(p))


def tangent_direction(p, goal, ob: Obstacle) -> np.ndarray:
    """Unit tangent of the circle about ``ob`` through ``p`` that points
    within 90 degrees of the attraction. Ties go to the counter-clockwise one.
    """
    p = _as_xy(p)
    rx, ry = p[0] - ob.cx, p[1] - ob.cy
    rn = math.hypot(rx, ry)
    if rn < 1e-12:
        raise ValueError("position coincides with obstacle center")
    ccw = np.array([-ry / rn, rx / rn])
    to_goal = _as_xy(goal) - p
    dot = float(ccw @ to_goal)
    if dot < -1e-12 * max(1.0, float(np.hypot(*to_goal))):
        return -ccw
    return ccw


def repulsive_components(p, goal, ob: Obstacle) -> tuple[float, float]:
    """Magnitudes of the two split repulsive forces (F_rep1, F_rep2)."""
    p = _as_xy(p)
    d = edge_distance(p, ob)
    if d <= 0:
        raise CollisionError("pose in collision")
    if d > ob.q_star:
        return 0.0, 0.0
    dg = float(np.hypot(*(_as_xy(goal) - p)))
    k = 1.0 / d - 1.0 / ob.q_star
    return ob.eta * k * dg**2 / d**2, ob.eta * k**2 * dg


def repulsive_potential(p, goal, ob: Obstacle) -> float:
    p = _as_xy(p)
    d = edge_distance(p, ob)
    if d <= 0:
        raise CollisionError("pose in collision")
    if d > ob.q_star:
        return 0.0
    dg2 = float(np.sum((_as_xy(goal) - p) ** 2))
    return 0.5 * ob.eta * (1.0 / d - 1.0 / ob.q_star) ** 2 * dg2


def repulsive_force(p, goal, ob: Obstacle, tangent_rule: bool = True) -> np.ndarray:
    p = _as_xy(p)
    goal = _as_xy(goal)
    f1, f2 = repulsive_components(p, goal, ob)
    if f1 == 0.0 and f2 == 0.0:
        return np.zeros(2)
    if tangent_rule:
        n1 = tangent_direction(p, goal, ob)
    else:
        r = p - ob.center
        n1 = r / np.hypot(*r)
    to_goal = goal - p
    dg = np.hypot(*to_goal)
    n2 = to_goal / dg if dg > 0 else np.zeros(2)
    return f1 * n1 + f2 * n2


def total_force(p, goal, obstacles: Sequence[Obstacle], cfg: ApfConfig) -> np.ndarray:
    f = attractive_force(p, goal, cfg.xi)
    for ob in obstacles:
        f = f + repulsive_force(p, goal, ob, cfg.tangent_rule)
    return f


def _clear(a: np.ndarray, b: np.ndarray, obstacles: Sequence[Obstacle], samples: int = 10) -> bool:
    for t in np.linspace(0.0, 1.0, samples + 1)[1:]:
        q = a + t * (b - a)
        for ob in obstacles:
            if edge_distance(q, ob) <= 0:
                return False
    return True


def _slide_direction(p: np.ndarray, u: np.ndarray, obstacles: Sequence[Obstacle]) -> np.ndarray:
    """Drop the inward radial part of ``u`` for the nearest obstacle, leaving
    a small outward bias so repeated slides do not creep into the surface."""
    ob = min(obstacles, key=lambda o: edge_distance(p, o))
    r = p - ob.center
    n = r / np.hypot(*r)
    t = u - min(float(u @ n), 0.0) * n
    tn = float(np.hypot(*t))
    if tn < 1e-9:
        return n
    t = t / tn + 0.05 * n
    return t / np.hypot(*t)


def plan_path(scenario: Scenario, cfg: ApfConfig = ApfConfig()) -> ReferencePath:
    """Descend the field from the scenario start to its goal.

    Each iterate moves ``cfg.step`` along the normalised total force (the last
    move is shortened to land on the goal). Moves that would cut into an
    obstacle are halved until clear.

    Raises:
        CollisionError: start or goal inside an (inflated) obstacle.
        StallDetected: goal distance stopped shrinking.
        IterationCap: ``cfg.max_iters`` reached.
    """
    obstacles = [ob.inflated(cfg.vehicle_radius) for ob in scenario.obstacles]
    goal = np.array(scenario.goal, dtype=float)
    p = scenario.start.xy
    for ob in obstacles:
        if edge_distance(p, ob) <= 0:
            raise CollisionError("start in collision")
        if edge_distance(goal, ob) <= 0:
            raise CollisionError("goal in collision")

    path = [p.copy()]
    hist = [float(np.hypot(*(goal - p)))]
    for _ in range(cfg.max_iters):
        dg = hist[-1]
        if dg <= cfg.goal_tol:
            return _finish(path, cfg.step, goal)
        f = total_force(p, goal, obstacles, cfg)
        fn = float(np.hypot(*f))
        if fn < 1e-12:
            raise StallDetected("zero net force away from the goal", np.array(path))
        h = min(cfg.step, dg)
        u = f / fn
        q = p + h * u
        if not _clear(p, q, obstacles):
            # slide along the blocking obstacle instead of pushing into it
            u = _slide_direction(p, u, obstacles)
            q = p + h * u
        while not _clear(p, q, obstacles):
            h *= 0.5
            if h < 1e-6:
                raise StallDetected("no collision-free move", np.array(path))
            q = p + h * u
        p = q
        path.append(p.copy())
        hist.append(float(np.hypot(*(goal - p))))
        if len(hist) > cfg.stall_window:
            progress = hist[-1 - cfg.stall_window] - hist[-1]
            if progress < cfg.stall_eps and hist[-1] > cfg.goal_tol:
                raise StallDetected(
                    f"goal distance fell by {progress:.3f} m over {cfg.stall_window} iterations",
                    np.array(path),
                )
    if hist[-1] <= cfg.goal_tol:
        return _finish(path, cfg.step, goal)
    raise IterationCap(f"no arrival after {cfg.max_iters} iterations", np.array(path))


def _finish(path: list[np.ndarray], step: float, goal: np.ndarray) -> ReferencePath:
    # close the remaining (< goal_tol) gap so the path ends on the goal
    xy = np.vstack([np.array(path), goal])
    # drop near-duplicate vertices produced by shortened steps
    keep = [0]
    for i in range(1, len(xy)):
        if np.hypot(*(xy[i] - xy[keep[-1]])) > 1e-6:
            keep.append(i)
    return ReferencePath.from_xy(xy[keep], resolution=step)
