import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from apftrack.apf import (
    ApfConfig, CollisionError, PlannerError, StallDetected, attractive_force, edge_distance,
    plan_path, repulsive_components, repulsive_force, repulsive_potential, tangent_direction,
    total_force,
)
from apftrack.core import Obstacle, Pose, Scenario

from conftest import path_collides, random_field

CFG = ApfConfig()


def scenario(obstacles, goal=(60.0, 0.0), start=(0.0, 0.0)):
    return Scenario(Pose(start[0], start[1], 0.0, 0.0), goal, tuple(obstacles))


def test_attractive_force_examples():
    assert np.array_equal(attractive_force((4, 5), (4, 5), 3.0), [0, 0])
    assert np.allclose(attractive_force((0, 0), (1, 0), 2.0), [2, 0])
    f = attractive_force((3, 4), (0, 0), 1.0)
    assert np.hypot(*f) == pytest.approx(5.0)
    assert np.allclose(f / 5.0, [-0.6, -0.8])


def test_repulsion_outside_influence_is_zero():
    ob = Obstacle(0, 0, 2, 5)
    assert np.array_equal(repulsive_force((8, 0), (20, 0), ob), [0, 0])


def test_repulsion_vanishes_at_goal_inside_band():
    ob = Obstacle(0, 0, 2, 6)
    goal = (3.0, 1.0)
    assert 0 < edge_distance(goal, ob) < ob.q_star
    assert np.allclose(repulsive_force(goal, goal, ob), 0.0)
    assert np.allclose(total_force(goal, goal, [ob], CFG), 0.0)


def test_collision_is_an_error():
    with pytest.raises(CollisionError, match="pose in collision"):
        repulsive_force((0.5, 0), (10, 0), Obstacle(0, 0, 2, 5))


def test_tangent_examples():
    ob = Obstacle(0, 0, 0.5, 3)
    assert np.allclose(tangent_direction((0, 1), (10, 0), ob), [1, 0])
    # p on the line between obstacle and goal: both tangents at 90 degrees
    t = tangent_direction((2, 0), (10, 0), ob)
    assert np.allclose(t, [0, 1])
    with pytest.raises(ValueError):
        tangent_direction((0, 0), (10, 0), ob)


def test_tangent_within_90_degrees_of_attraction():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        c, p, g = rng.uniform(-20, 20, (3, 2))
        if np.hypot(*(p - c)) < 1e-3:
            continue
        t = tangent_direction(p, g, Obstacle(c[0], c[1], 1e-4, 1.0))
        assert t @ attractive_force(p, g, 1.0) >= -1e-9


points = st.tuples(st.floats(-50, 50), st.floats(-50, 50))


@given(points, points, points)
def test_tangent_is_unit_and_orthogonal_to_radius(p, g, c):
    r = np.subtract(p, c)
    assume(np.hypot(*r) > 1e-3)
    t = tangent_direction(p, g, Obstacle(c[0], c[1], 1e-4, 1.0))
    assert np.hypot(*t) == pytest.approx(1.0)
    assert abs(t @ r) / np.hypot(*r) < 1e-9


def test_total_force_without_obstacles_is_attraction():
    assert np.allclose(total_force((1, 2), (7, -3), [], CFG), attractive_force((1, 2), (7, -3), CFG.xi))
    far = [Obstacle(100, 100, 2, 5)]
    assert np.allclose(total_force((7, -3), (7, -3), far, CFG), 0)


def test_mirrored_pair_cancels_laterally():
    pair = [Obstacle(10, 4, 1.5, 6), Obstacle(10, -4, 1.5, 6)]
    f = total_force((8, 0), (30, 0), pair, CFG)
    assert abs(f[1]) < 1e-12
    assert f[0] > 0


def test_potential_continuous_at_band_edge():
    ob = Obstacle(0, 0, 2, 6)
    d = ob.q_star * (1 - 1e-6)
    assert abs(repulsive_potential((ob.r + d, 0), (30, 0), ob)) < 1e-6


@given(st.floats(0.05, 4.9), st.floats(0.5, 100), st.floats(0, 2 * math.pi))
def test_goal_distance_scaling(d, dg, ang):
    ob = Obstacle(0, 0, 1, 6)
    p = np.array([ob.r + d, 0.0])
    g1 = p + dg * np.array([math.cos(ang), math.sin(ang)])
    g2 = p + 0.5 * dg * np.array([math.cos(ang), math.sin(ang)])
    f1a, f2a = repulsive_components(p, g1, ob)
    f1b, f2b = repulsive_components(p, g2, ob)
    assert f1b == pytest.approx(f1a / 4, rel=1e-9)
    assert f2b == pytest.approx(f2a / 2, rel=1e-9)


def test_empty_field_is_straight():
    path = plan_path(scenario([], goal=(40.0, 30.0)))
    assert path.length == pytest.approx(50.0, rel=0.01)
    assert np.allclose(path.xy[-1], [40, 30])


def test_goal_next_to_obstacle_is_reached():
    ob = Obstacle(60, 7, 3, 8)
    assert edge_distance((60, 0), ob) < ob.q_star
    path = plan_path(scenario([ob]))
    assert np.allclose(path.xy[-1], [60, 0])
    assert not path_collides(path.xy, [ob])


def test_collinear_obstacle_needs_tangent_rule():
    obs = [Obstacle(30, 0, 4, 10)]
    path = plan_path(scenario(obs))
    assert np.hypot(*(path.xy[-1] - [60, 0])) <= CFG.goal_tol
    assert not path_collides(path.xy, obs, margin=CFG.vehicle_radius)
    with pytest.raises(StallDetected):
        plan_path(scenario(obs), ApfConfig(tangent_rule=False))


def test_start_in_collision():
    with pytest.raises(CollisionError, match="start"):
        plan_path(scenario([Obstacle(0.5, 0, 1, 4)]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_planned_paths_never_collide(seed):
    sc = random_field(np.random.default_rng(seed), n=6)
    try:
        path = plan_path(sc)
    except PlannerError:
        return
    assert np.allclose(path.xy[-1], sc.goal)
    assert not path_collides(path.xy, sc.obstacles, margin=CFG.vehicle_radius)


def test_config_validation():
    with pytest.raises(ValueError):
        ApfConfig(step=0)
    with pytest.raises(ValueError):
        ApfConfig(vehicle_radius=-1)
