import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apftrack.cli import bundled_scenarios, load_run_config
from apftrack.core import KMH, Pose, ReferencePath, Scenario, VehicleParams
from apftrack.sim import plan
from apftrack.speed import (
    assign_reference_speeds, backward_pass, dynamic_speed_limit, front_wheel_limit,
    kinematic_speed_limit, limits, understeer_diagnostics,
)

P = VehicleParams()


def test_dynamic_limit_hand_value():
    assert dynamic_speed_limit(0.1, P, 0.65) == pytest.approx(0.65 * math.sqrt(83.385), abs=1e-9)
    assert dynamic_speed_limit(0.1, P, 0.65) == pytest.approx(5.935, abs=1e-3)
    assert dynamic_speed_limit(-0.1, P, 0.65) == dynamic_speed_limit(0.1, P, 0.65)


def test_straight_road_is_unbounded():
    assert math.isinf(dynamic_speed_limit(0.0, P, 0.65))
    assert math.isinf(kinematic_speed_limit(0.0, P))
    assert limits(np.zeros(3), P, 0.65, 12.0).tolist() == [12.0] * 3


def test_kinematic_limit_hand_value():
    want = math.sqrt(8.3385 * math.sqrt(1 + 2.7**2 * 0.01) * math.sqrt(100 - 2.7**2))
    assert kinematic_speed_limit(0.1, P) == pytest.approx(want, rel=1e-12)
    assert kinematic_speed_limit(0.1, P) == pytest.approx(9.12, abs=0.005)


def test_turn_radius_at_wheelbase_is_an_error():
    with pytest.raises(ValueError, match="turn radius below wheelbase"):
        kinematic_speed_limit(1 / P.wheelbase, P)


def test_front_wheel_limit_examples():
    assert front_wheel_limit(8.333, P, 5.0) == pytest.approx(0.1525, abs=1e-4)
    assert front_wheel_limit(1e-9, P, 5.0) == pytest.approx(2.7 / 5)
    assert front_wheel_limit(0.0, P, 5.0) == pytest.approx(2.7 / 5)


def test_understeer_diagnostics_are_reported():
    d = understeer_diagnostics(10.0, P)
    assert set(d) == {"K", "yaw_rate_gain"}
    assert d["yaw_rate_gain"] == pytest.approx(10 / (P.wheelbase * (1 + d["K"] * 100)))


def straight(length, res=0.5):
    x = np.arange(0.0, length + 1e-9, res)
    return ReferencePath.from_xy(np.c_[x, np.zeros_like(x)], res)


def sc(v_set):
    return Scenario(Pose(0, 0, 0, 0), (1.0, 0.0), v_set=v_set)


def test_straight_path_holds_set_speed_until_terminal_ramp():
    ref = assign_reference_speeds(straight(200), sc(30 * KMH), P, 2.5)
    ramp = (30 * KMH) ** 2 / (2 * 2.5)
    far = ref.s < ref.length - ramp - 0.5
    assert np.allclose(ref.v_ref[far], 30 * KMH)
    assert ref.v_ref[-1] == 0.0
    tail = ~far
    assert np.allclose(ref.v_ref[tail], np.minimum(30 * KMH, np.sqrt(2 * 2.5 * (ref.length - ref.s[tail]))))


def test_arc_plateau_and_approach_ramp():
    base = straight(300)
    kappa = np.where((base.s >= 150) & (base.s <= 170), 0.1, 0.0)
    ref = assign_reference_speeds(base.with_columns(curvature=kappa), sc(13.89), P, 2.5)
    v_arc = dynamic_speed_limit(0.1, P, 0.65)
    assert np.allclose(ref.v_ref[kappa > 0], v_arc)
    assert v_arc == pytest.approx(5.94, abs=0.01)
    # closed form of the backward pass on a two-level profile
    before = base.s < 150
    want = np.minimum(13.89, np.sqrt(v_arc**2 + 2 * 2.5 * (150 - base.s[before])))
    assert np.allclose(ref.v_ref[before], want, atol=1e-9)


def test_infinite_braking_leaves_profile_alone():
    v = np.array([5.0, 9.0, 1.0, 7.0])
    assert np.array_equal(backward_pass(v, np.arange(4.0), math.inf), v)


def check_invariants(ref, v_set, lam, a_dec, params=P):
    cap = limits(ref.curvature, params, lam, v_set)
    assert np.all(ref.v_ref <= cap + 1e-12)
    lhs = ref.v_ref[:-1] ** 2 - ref.v_ref[1:] ** 2
    assert np.all(lhs <= 2 * a_dec * np.diff(ref.s) + 1e-9)


profiles = st.lists(st.floats(-0.2, 0.2), min_size=5, max_size=80)


@given(profiles, st.floats(1, 30), st.floats(0.2, 1.0), st.floats(0.3, 8))
def test_speed_invariants(kappa, v_set, lam, a_dec):
    base = straight(0.5 * (len(kappa) - 1))
    ref = assign_reference_speeds(base.with_columns(curvature=np.array(kappa)),
                                  Scenario(Pose(0, 0, 0, 0), (1, 0), v_set=v_set, lambda_d=lam), P, a_dec)
    check_invariants(ref, v_set, lam, a_dec)
    assert ref.v_ref[-1] == 0.0


# scaled curvatures stay below 1/wheelbase, the kinematic limit's domain
@given(st.lists(st.floats(-0.12, 0.12), min_size=5, max_size=80), st.floats(1.0, 3.0))
def test_more_curvature_never_raises_speed(kappa, scale):
    base = straight(0.5 * (len(kappa) - 1))
    k = np.array(kappa)
    a = assign_reference_speeds(base.with_columns(curvature=k), sc(15.0), P, 2.5)
    b = assign_reference_speeds(base.with_columns(curvature=k * scale), sc(15.0), P, 2.5)
    assert np.all(b.v_ref <= a.v_ref + 1e-12)


@settings(deadline=None, max_examples=len(bundled_scenarios()) * 2)
@given(st.sampled_from(bundled_scenarios()), st.sampled_from([30.0, 50.0]))
def test_bundled_scenarios_satisfy_backward_pass(name, kmh):
    cfg = load_run_config(name, speed_kmh=kmh)
    ref = plan(cfg)
    check_invariants(ref, cfg.scenario.v_set, cfg.scenario.lambda_d, cfg.speed.a_dec_max, cfg.vehicle)
