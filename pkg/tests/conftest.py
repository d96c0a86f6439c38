import json
import math

import numpy as np
import pytest

from apftrack.config import load_config
from apftrack.core import VehicleParams
from apftrack.smoothing import compute_heading_curvature


@pytest.fixture
def params():
    return VehicleParams()


def straight_xy(length=150.0, res=0.5, y=0.0):
    x = np.arange(0.0, length + 1e-9, res)
    return np.c_[x, np.full_like(x, y)]


def arc_xy(R=20.0, lead=40.0, angle=math.pi / 2, res=0.5):
    """Straight lead-in along +X followed by a left (CCW) arc of radius R."""
    pts = [(x, 0.0) for x in np.arange(0.0, lead, res)]
    for t in np.arange(0.0, angle + 1e-12, res / R):
        pts.append((lead + R * math.sin(t), R * (1 - math.cos(t))))
    return np.array(pts)


def circle_xy(R=10.0, res=0.5, turns=1.0):
    t = np.arange(0.0, 2 * math.pi * turns, res / R)
    return np.c_[R * np.cos(t), R * np.sin(t)]


def geometry(xy, res=0.5):
    return compute_heading_curvature(np.asarray(xy, float), res)


def config(doc):
    return load_config(json.dumps(doc))


def random_field(rng, n=8, goal=(100.0, 0.0), vehicle_radius=1.5):
    """Random obstacle field with at least one vehicle width of free space
    between any two inflated discs and clear of start and goal."""
    from apftrack.core import Obstacle, Pose, Scenario

    obs = []
    while len(obs) < n:
        cx, cy = rng.uniform([15, -25], [goal[0] - 15, 25])
        r = rng.uniform(1.0, 5.0)
        ob = Obstacle(cx, cy, r, r + rng.uniform(2.0, 6.0), 15.0)
        need = 2 * vehicle_radius
        if any(math.hypot(cx - q.cx, cy - q.cy) < ob.r + q.r + 2 * vehicle_radius + need for q in obs):
            continue
        if math.hypot(cx, cy) < r + 6 or math.hypot(cx - goal[0], cy - goal[1]) < r + 6:
            continue
        obs.append(ob)
    return Scenario(Pose(0.0, 0.0, 0.0, 0.0), goal, tuple(obs))


def path_collides(xy, obstacles, margin=0.0, samples=10):
    xy = np.asarray(xy, float)
    pts = [xy[:1]]
    for a, b in zip(xy[:-1], xy[1:]):
        t = np.linspace(0, 1, samples + 1)[1:, None]
        pts.append(a + t * (b - a))
    pts = np.vstack(pts)
    for ob in obstacles:
        if np.any(np.hypot(pts[:, 0] - ob.cx, pts[:, 1] - ob.cy) <= ob.r + margin):
            return True
    return False


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
