import json
import math

import numpy as np
import pytest

from apftrack.cli import EXIT_OK, EXIT_PLANNER, EXIT_TRACKING, EXIT_VALIDATION, load_run_config, main
from apftrack.config import load_config
from apftrack.sim import CSV_COLUMNS, TickRecord, compare, emit_csv, plan, read_csv, run


def record(k):
    return TickRecord(t=k * 0.005, X=k * 0.04, Y=-0.01 * k, theta=0.001 * k, v=8.0, v_ref=8.3, dy=0.01,
                      dphi=-0.002, y_l2=None if k % 2 else 0.3, delta_f=0.01, steering_wheel=0.16,
                      Tp=1.2, a_lat=0.5, phidot=0.02, kappa_ref=0.003, sigma=None)


def test_header_only_csv(tmp_path):
    emit_csv([], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == [",".join(CSV_COLUMNS)]


def test_csv_line_count_and_round_trip(tmp_path):
    recs = [record(k) for k in range(1000)]
    emit_csv(recs, tmp_path / "t.csv")
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 1001
    cols = read_csv(tmp_path / "t.csv")
    assert list(cols) == list(CSV_COLUMNS)
    assert np.allclose(cols["X"], [r.X for r in recs], atol=5e-7)
    assert np.isnan(cols["y_l2"][1]) and cols["y_l2"][0] == 0.3
    assert np.all(np.isnan(cols["sigma"]))


def straight_cfg(controller, **sim):
    doc = {"scenario": {"start": {"X": 0, "Y": 0, "theta": 0, "v": 0}, "goal": [100, 0], "v_set_kmh": 30,
                        "controller": controller, "sim": {"T_end": 60, **sim}}}
    return load_config(json.dumps(doc))


@pytest.mark.parametrize("controller", ["cc", "mpc"])
def test_straight_road_tracks_exactly(controller, tmp_path):
    cfg = straight_cfg(controller)
    m = run(cfg, tmp_path)
    assert m.completed and m.failure is None
    assert m.max_abs_dy < 0.02
    assert m.final_goal_distance <= cfg.tracking.goal_tol and m.final_speed < 0.5
    for name in ("trace.csv", "path.csv", "metrics.json"):
        assert (tmp_path / name).exists()
    assert any(p.suffix == ".svg" for p in tmp_path.iterdir())
    flat = json.loads((tmp_path / "metrics.json").read_text())
    assert flat["completed"] is True and flat["controller"] == controller


def test_short_horizon_is_incomplete():
    m = run(straight_cfg("cc", T_end=2.0))
    assert not m.completed


def test_runs_are_byte_identical(tmp_path):
    cfg = straight_cfg("mpc")
    run(cfg, tmp_path / "a", plots=False)
    run(cfg, tmp_path / "b", plots=False)
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


@pytest.fixture(scope="module")
def park_compare(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare")
    return compare(load_run_config("park"), out, workers=4), out


def test_compare_plans_once(park_compare):
    rows, out = park_compare
    assert len(rows) == 4
    assert {(r.controller, round(r.v_set * 3.6)) for r in rows} == {("cc", 30), ("mpc", 30), ("cc", 50), ("mpc", 50)}
    assert len({r.path_digest for r in rows}) == 1
    assert rows[0].path_digest == plan(load_run_config("park")).digest(geometry_only=True)
    assert (out / "comparison.csv").read_text().count("\n") == 5


def test_completed_runs_stop_at_goal(park_compare):
    rows, _ = park_compare
    goal_tol = load_run_config("park").tracking.goal_tol
    for r in rows:
        assert r.completed, r.failure
        assert r.final_goal_distance <= goal_tol and r.final_speed < 0.5


def test_preview_time_mostly_one_second(park_compare):
    _, out = park_compare
    tp = read_csv(out / "cc_50kmh" / "trace.csv")["Tp"]
    assert 0.8 <= float(np.nanmedian(tp)) <= 1.2


def test_cli_plan(tmp_path, capsys):
    assert main(["plan", "--scenario", "park", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "path.csv").exists() and (tmp_path / "path.svg").exists()


def test_cli_run(tmp_path):
    code = main(["run", "--scenario", "straight", "--controller", "mpc", "--speed", "20",
                 "--no-plots", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert json.loads((tmp_path / "metrics.json").read_text())["v_set"] == pytest.approx(20 / 3.6)


def write(tmp_path, doc):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_validation_errors(tmp_path, capsys):
    assert main(["plan", "--scenario", "no-such-scenario"]) == EXIT_VALIDATION
    bad = write(tmp_path, {"scenario": {"start": {"X": 0, "Y": 0, "theta": 0, "v": 0}, "goal": [9, 9],
                                        "obstacles": [{"cx": 5, "cy": 5, "r": 2, "q_star": 1}]}})
    assert main(["plan", "--scenario", bad]) == EXIT_VALIDATION
    assert "q_star must exceed r" in capsys.readouterr().err
    assert main(["run", "--scenario", "straight", "--speed", "-5"]) == EXIT_VALIDATION


def test_cli_planner_failure(tmp_path):
    # collinear obstacle with the classic radial field stalls
    doc = {"scenario": {"start": {"X": 0, "Y": 0, "theta": 0, "v": 0}, "goal": [60, 0],
                        "obstacles": [{"cx": 30, "cy": 0, "r": 4, "q_star": 10}]},
           "planner": {"apf": {"tangent_rule": False}}}
    assert main(["plan", "--scenario", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == EXIT_PLANNER


def test_cli_tracking_failure(tmp_path):
    doc = {"scenario": {"start": {"X": 0, "Y": 0, "theta": 0, "v": 0}, "goal": [100, 0],
                        "sim": {"T_end": 2.0}}}
    code = main(["run", "--scenario", write(tmp_path, doc), "--no-plots", "--out", str(tmp_path / "o")])
    assert code == EXIT_TRACKING
