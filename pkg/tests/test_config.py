import json
import math

import pytest
from hypothesis import given, strategies as st

from apftrack.cli import read_scenario_text
from apftrack.config import ConfigError, load_config, load_scenario, serialize
from apftrack.core import KMH, Bounds, Obstacle, Pose, Scenario, ValidationError, normalize_angle

MINIMAL = {"scenario": {"start": {"X": 0, "Y": 0, "theta_deg": 0, "v": 0}, "goal": [50, 50]}}


def test_minimal_document_has_no_obstacles():
    s = load_scenario(json.dumps(MINIMAL))
    assert s.obstacles == ()
    assert s.goal == (50.0, 50.0)
    assert s.start == Pose(0.0, 0.0, 0.0, 0.0)


def test_q_star_below_radius_names_the_line():
    text = """{
 "scenario": {
  "start": {"X": 0, "Y": 0, "theta_deg": 0, "v": 0},
  "goal": [50, 50],
  "obstacles": [{"cx": 20, "cy": 20, "r": 2, "q_star": 1}]
 }
}"""
    with pytest.raises(ValidationError, match="q_star must exceed r") as exc:
        load_scenario(text)
    assert exc.value.line == 5


def test_bundled_park_speed():
    s = load_scenario(read_scenario_text("park"))
    assert s.v_set == pytest.approx(8.333, abs=5e-4)
    assert s.v_set == pytest.approx(30 * KMH)
    assert len(s.obstacles) >= 6


def test_unknown_key_rejected():
    doc = json.loads(json.dumps(MINIMAL))
    doc["scenario"]["colour"] = "red"
    with pytest.raises(ConfigError, match="unknown key"):
        load_scenario(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_config(json.dumps({**MINIMAL, "extras": {}}))


def test_duplicate_key_rejected():
    text = '{"scenario": {"start": {"X": 0, "Y": 0, "theta": 0, "v": 0}, "goal": [1, 1], "goal": [2, 2]}}'
    with pytest.raises(ConfigError, match="duplicate"):
        load_scenario(text)


def test_parse_error_reports_line():
    with pytest.raises(ConfigError) as exc:
        load_scenario('{\n "scenario": {\n  "start": ,\n }\n}')
    assert exc.value.line == 3


def test_unit_aliases_convert_at_the_boundary():
    doc = {"scenario": {"start": {"X": 0, "Y": 0, "theta_deg": 90, "v_kmh": 36}, "goal": [1, 1],
                        "v_set_kmh": 50}}
    s = load_scenario(json.dumps(doc))
    assert s.start.theta == pytest.approx(math.pi / 2)
    assert s.start.v == pytest.approx(10.0)
    assert s.v_set == pytest.approx(50 / 3.6)


def test_overrides_reach_every_section():
    cfg = load_config(json.dumps({**MINIMAL,
                                  "vehicle": {"m": 1800},
                                  "planner": {"apf": {"step": 0.25}, "smoothing": {"window": 12}},
                                  "controller": {"mpc": {"Np": 20}, "cc": {"Ki": 0.001}}}))
    assert cfg.vehicle.m == 1800
    assert cfg.apf.step == 0.25
    assert cfg.smoothing.window == 12
    assert cfg.mpc.Np == 20
    assert cfg.cc.Ki == 0.001


def test_goal_outside_bounds_rejected():
    doc = json.loads(json.dumps(MINIMAL))
    doc["scenario"]["bounds"] = {"xmin": -10, "xmax": 10, "ymin": -10, "ymax": 10}
    with pytest.raises(ValidationError, match="goal"):
        load_scenario(json.dumps(doc))


@pytest.mark.parametrize("a, want", [(0.0, 0.0), (3 * math.pi, math.pi), (-1.5 * math.pi, 0.5 * math.pi)])
def test_normalize_angle_examples(a, want):
    assert normalize_angle(a) == pytest.approx(want, abs=1e-12)


@given(st.floats(-50, 50, allow_nan=False), st.integers(-3, 3))
def test_normalize_angle_periodic(a, k):
    x, y = normalize_angle(a + 2 * math.pi * k), normalize_angle(a)
    # both land in (-pi, pi]; compare on the circle so the branch cut does not matter
    assert -math.pi < x <= math.pi
    assert abs(math.remainder(x - y, 2 * math.pi)) < 1e-9


coord = st.floats(-500, 500, allow_nan=False)
obstacle = st.builds(lambda cx, cy, r, band, eta: Obstacle(cx, cy, r, r + band, eta),
                     coord, coord, st.floats(0.1, 30), st.floats(0.1, 20), st.floats(0.1, 50))


@given(st.builds(Pose, coord, coord, st.floats(-3.1, 3.1), st.floats(0, 30)),
       st.tuples(coord, coord), st.lists(obstacle, max_size=5),
       st.floats(0.5, 40), st.floats(0.1, 1.0), st.sampled_from(["cc", "mpc"]))
def test_scenario_round_trip(start, goal, obstacles, v_set, lam, ctrl):
    s = Scenario(start, goal, tuple(obstacles), v_set, lam, Bounds(-1000, 1000, -1000, 1000), ctrl)
    assert load_scenario(serialize(s)) == s


def test_config_round_trip():
    cfg = load_config(read_scenario_text("park"))
    assert load_config(serialize(cfg)) == cfg
