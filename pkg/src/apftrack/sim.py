"""Closed-loop harness: plan, smooth, profile speeds, then track.

The plant runs at ``Ts``.  CC is updated every plant tick; MPC every
``mpc.T`` seconds with its command held in between.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .apf import PlannerError, CollisionError, plan_path
from .cc import CcController
from .config import RunConfig
from .core import KMH, MAX_STEER, Controller, ReferencePath
from .mpc import OUT_YL2, MpcController
from .plant import BicyclePlant, DivergedFromPath, LateralErrorState, PathProjector, PlantState, slip_gain
from .qp import QpInfeasible
from .smoothing import PathGeometryError, smooth_path
from .speed import assign_reference_speeds

CSV_COLUMNS = (
    "t", "X", "Y", "theta", "v", "v_ref", "dy", "dphi", "y_l2", "delta_f",
    "steering_wheel", "Tp", "a_lat", "phidot", "kappa_ref", "sigma",
)
FRONT_SLIP_LIMIT = math.radians(2.5)
CONSTRAINT_TOL = 1e-9


class PlanningFailed(RuntimeError):
    pass


@dataclass
class TickRecord:
    t: float
    X: float
    Y: float
    theta: float
    v: float
    v_ref: float
    dy: float
    dphi: float
    y_l2: float | None
    delta_f: float
    steering_wheel: float
    Tp: float | None
    a_lat: float
    phidot: float
    kappa_ref: float
    sigma: float | None = None
    mpc_cost: float | None = None


@dataclass
class RunMetrics:
    controller: str
    v_set: float
    max_abs_dy: float = 0.0
    rms_dy: float = 0.0
    max_a_lat: float = 0.0
    max_abs_delta_f: float = 0.0
    speed_rmse: float = 0.0
    completed: bool = False
    final_goal_distance: float = math.inf
    final_speed: float = 0.0
    sim_time: float = 0.0
    wallclock: float = 0.0
    ticks: int = 0
    path_length: float = 0.0
    path_digest: str = ""
    violations: dict = field(default_factory=dict)
    failure: dict | None = None

    def as_flat(self) -> dict:
        out = {}
        for k, v in dataclasses.asdict(self).items():
            if k == "violations":
                out.update({f"violations_{n}": c for n, c in v.items()})
            elif k == "failure":
                out["failure_kind"] = v["kind"] if v else None
                out["failure_tick"] = v["tick"] if v else None
                out["failure_message"] = v["message"] if v else None
            else:
                out[k] = v
        return out


# ------------------------------------------------------------- planning

def plan_geometry(cfg: RunConfig) -> ReferencePath:
    """APF descent followed by the smoothing pipeline (no speeds yet)."""
    try:
        raw = plan_path(cfg.scenario, cfg.apf)
        return smooth_path(raw, cfg.smoothing)
    except (PlannerError, CollisionError, PathGeometryError) as exc:
        raise PlanningFailed(f"{type(exc).__name__}: {exc}") from exc


def profile(geometry: ReferencePath, cfg: RunConfig) -> ReferencePath:
    path = assign_reference_speeds(geometry, cfg.scenario, cfg.vehicle, cfg.speed.a_dec_max)
    path.validate()
    return path


def plan(cfg: RunConfig) -> ReferencePath:
    return profile(plan_geometry(cfg), cfg)


# ------------------------------------------------------------ tracking

def _speed_command(path: ReferencePath, s: float, lead: float) -> float:
    # slowest reference speed over the lead window: brakes early, but does
    # not speed up before a curvature peak has been passed
    s1 = min(s + lead, path.length)
    i0, i1 = np.searchsorted(path.s, [s, s1])
    v = [path.interp(s, "v_ref"), path.interp(s1, "v_ref")]
    if i1 > i0:
        v.append(float(np.min(path.v_ref[i0:i1])))
    return min(v)


def _initial_state(cfg: RunConfig) -> PlantState:
    st = cfg.scenario.start
    return PlantState(st.X, st.Y, st.theta, st.v)


def track(path: ReferencePath, cfg: RunConfig, controller: Controller | str | None = None,
          geometry_digest: str | None = None) -> tuple[list[TickRecord], RunMetrics]:
    """Run the closed loop on a speed-profiled path until goal or T_end."""
    ctrl = Controller(controller or cfg.scenario.controller)
    sc, p, tr = cfg.scenario, cfg.vehicle, cfg.tracking
    Ts = sc.sim.Ts
    wall0 = time.perf_counter()
    metrics = RunMetrics(ctrl.value, sc.v_set, path_length=path.length,
                         path_digest=geometry_digest or path.digest(geometry_only=True))
    viol = {"du": 0, "u": 0, "dy_bound": 0, "yaw_rate": 0, "front_slip": 0,
            "qp_cap": 0, "qp_infeasible": 0}

    plant = BicyclePlant(p, _initial_state(cfg), Ts, tr.a_max, tr.a_dec_max, tr.k_v)
    projector = PathProjector(path, guard=tr.diverge_guard)
    if ctrl is Controller.CC:
        cc = CcController(dataclasses.replace(cfg.cc, T_delay=sc.sim.T_delay), p, Ts)
        mpc = None
        u_max = MAX_STEER
    else:
        cc = None
        mpc = MpcController(cfg.mpc, p)
        u_max = cfg.mpc.u_bound
        hold = max(1, int(round(cfg.mpc.T / Ts)))
    goal = np.array(sc.goal)
    n_max = int(math.floor(sc.sim.T_end / Ts + 1e-9))
    records: list[TickRecord] = []
    delta = 0.0
    mpc_extra = (None, None, None)

    try:
        for k in range(n_max + 1):
            st = plant.state
            t = k * Ts
            proj = projector.project(st.pose)
            err = LateralErrorState(proj.dy, st.vy, proj.dphi, st.r)
            if cc is not None:
                delta = cc.step(proj, st.vy, st.r, st.vx, path).delta_f
                tp, yl2, sigma, cost = cc.last["Tp"], cc.last["y_l2"], None, None
            else:
                if k % hold == 0:
                    prev = delta
                    try:
                        delta = mpc.step(err, st.vx, proj, path).delta_f
                    except QpInfeasible as exc:
                        metrics.failure = {"kind": "mpc_infeasible", "tick": k, "message": str(exc)}
                        break
                    out = mpc.last
                    if abs(delta - prev) > cfg.mpc.du_bound + CONSTRAINT_TOL:
                        viol["du"] += 1
                    v_m = max(st.vx, cfg.mpc.vx_min)
                    l_eff = max(v_m * cfg.mpc.preview_time, cfg.mpc.l_eff_min)
                    yl2_now = (proj.dy + l_eff * proj.dphi - l_eff * slip_gain(v_m, p) * delta
                               + 0.5 * l_eff**2 * proj.kappa_ref)
                    mpc_extra = (yl2_now, out.sigma, out.cost)
                tp = None
                yl2, sigma, cost = mpc_extra
            if abs(delta) > u_max + CONSTRAINT_TOL:
                viol["u"] += 1
            if abs(proj.dy) > cfg.mpc.output_dev_bound:
                viol["dy_bound"] += 1
            vx = st.vx
            if vx >= 0.5:
                if abs(st.r) > cfg.mpc.yaw_accel_factor * p.mu * p.g / vx:
                    viol["yaw_rate"] += 1
                alpha_f = delta - (st.vy + p.lf * st.r) / vx
                if abs(alpha_f) > FRONT_SLIP_LIMIT:
                    viol["front_slip"] += 1
            records.append(TickRecord(
                t, st.X, st.Y, math.remainder(st.psi, 2 * math.pi), vx, proj.v_ref, proj.dy, proj.dphi,
                yl2, delta, delta * p.steer_ratio, tp, vx * st.r, st.r, proj.kappa_ref, sigma, cost,
            ))
            gd = float(np.hypot(*(goal - st.pose.xy)))
            if gd <= tr.goal_tol and vx < tr.stop_speed:
                metrics.completed = True
                break
            if k == n_max:
                break
            v_cmd = _speed_command(path, proj.s, vx * tr.speed_lead)
            if gd > tr.goal_tol and (proj.s >= path.length - 1e-6 or (v_cmd <= 0.0 and vx < 1e-3)):
                metrics.failure = {"kind": "missed_goal", "tick": k,
                                   "message": f"path end reached {gd:.2f} m from the goal"}
                break
            plant.step(delta, v_cmd)
    except DivergedFromPath as exc:
        metrics.failure = {"kind": "diverged", "tick": len(records), "message": str(exc)}

    if mpc is not None:
        viol["qp_cap"] = mpc.qp_warnings
        viol["qp_infeasible"] = mpc.infeasible_ticks
    if records:
        dy = np.array([r.dy for r in records])
        v = np.array([r.v for r in records])
        vr = np.array([r.v_ref for r in records])
        metrics.max_abs_dy = float(np.max(np.abs(dy)))
        metrics.rms_dy = float(np.sqrt(np.mean(dy**2)))
        metrics.max_a_lat = float(max(abs(r.a_lat) for r in records))
        metrics.max_abs_delta_f = float(max(abs(r.delta_f) for r in records))
        metrics.speed_rmse = float(np.sqrt(np.mean((v - vr) ** 2)))
        last = records[-1]
        metrics.final_goal_distance = float(np.hypot(last.X - goal[0], last.Y - goal[1]))
        metrics.final_speed = last.v
        metrics.sim_time = last.t
    if metrics.completed is False and metrics.failure is None:
        metrics.failure = {"kind": "timeout", "tick": len(records), "message": f"T_end={sc.sim.T_end} s reached"}
    metrics.ticks = len(records)
    metrics.violations = viol
    metrics.wallclock = time.perf_counter() - wall0
    return records, metrics


# -------------------------------------------------------------- output

def _fmt(v) -> str:
    if v is None:
        return ""
    out = f"{v:.6f}"
    return "0.000000" if out == "-0.000000" else out


def emit_csv(records: list[TickRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def read_csv(path) -> dict[str, np.ndarray]:
    """Parse a trace back into float columns (empty cells become NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.full(len(body), np.nan) for h in header}
    for i, row in enumerate(body):
        for h, cell in zip(header, row):
            if cell != "":
                cols[h][i] = float(cell)
    return cols


def emit_path_csv(path: ReferencePath, out) -> None:
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "X", "Y", "heading", "curvature", "v_ref"])
        for row in zip(path.s, path.x, path.y, path.heading, path.curvature, path.v_ref):
            w.writerow([_fmt(float(v)) for v in row])


def write_metrics(metrics: RunMetrics, out) -> None:
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(metrics.as_flat(), fh, indent=2)
        fh.write("\n")


def run(cfg: RunConfig, out_dir=None, controller=None, path: ReferencePath | None = None,
        plots: bool = True) -> RunMetrics:
    """Full pipeline for one controller.  Planning failures propagate as
    PlanningFailed; tracking failures are recorded in the metrics."""
    if path is None:
        path = plan(cfg)
    records, metrics = track(path, cfg, controller)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        emit_csv(records, out / "trace.csv")
        emit_path_csv(path, out / "path.csv")
        write_metrics(metrics, out / "metrics.json")
        if plots:
            from .plots import write_run_plots
            write_run_plots(records, path, cfg.scenario, out)
    return metrics


COMPARE_SPEEDS_KMH = (30.0, 50.0)


def compare(cfg: RunConfig, out_dir=None, speeds_kmh=COMPARE_SPEEDS_KMH, workers: int = 1) -> list[RunMetrics]:
    """Plan the geometry once and track it with both controllers at each
    speed.  A failing run is recorded in its row; the others still run."""
    geometry = plan_geometry(cfg)
    digest = geometry.digest(geometry_only=True)
    jobs = [(kmh, c) for kmh in speeds_kmh for c in (Controller.CC, Controller.MPC)]

    def one(job):
        kmh, c = job
        sub = cfg.with_speed_kmh(kmh).with_controller(c)
        try:
            path = profile(geometry, sub)
            records, m = track(path, sub, c, digest)
        except Exception as exc:  # noqa: BLE001 - any failure becomes a row
            m = RunMetrics(c.value, kmh * KMH, path_digest=digest,
                           failure={"kind": "error", "tick": None, "message": f"{type(exc).__name__}: {exc}"})
            records = []
        if out_dir is not None:
            d = Path(out_dir) / f"{c.value}_{int(kmh)}kmh"
            d.mkdir(parents=True, exist_ok=True)
            emit_csv(records, d / "trace.csv")
            write_metrics(m, d / "metrics.json")
        return m

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    if out_dir is not None:
        write_comparison(rows, Path(out_dir) / "comparison.csv")
    return rows


COMPARISON_COLUMNS = ("controller", "v_set_kmh", "completed", "max_abs_dy", "rms_dy", "max_a_lat",
                      "max_abs_delta_f", "speed_rmse", "sim_time", "wallclock", "path_digest", "failure")


def comparison_rows(rows: list[RunMetrics]) -> list[dict]:
    out = []
    for m in rows:
        out.append({
            "controller": m.controller, "v_set_kmh": round(m.v_set / KMH, 3), "completed": m.completed,
            "max_abs_dy": m.max_abs_dy, "rms_dy": m.rms_dy, "max_a_lat": m.max_a_lat,
            "max_abs_delta_f": m.max_abs_delta_f, "speed_rmse": m.speed_rmse, "sim_time": m.sim_time,
            "wallclock": m.wallclock, "path_digest": m.path_digest,
            "failure": m.failure["kind"] if m.failure else "",
        })
    return out


def write_comparison(rows: list[RunMetrics], out) -> None:
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, COMPARISON_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in comparison_rows(rows):
            w.writerow(r)


def format_table(rows: list[RunMetrics]) -> str:
    head = f"{'controller':<10} {'km/h':>5} {'done':>5} {'max|dy|':>8} {'rms dy':>7} {'max a_lat':>9} {'max|df|deg':>10} {'v rmse':>7}  failure"
    lines = [head]
    for r in comparison_rows(rows):
        lines.append(
            f"{r['controller']:<10} {r['v_set_kmh']:>5.0f} {str(r['completed']):>5} {r['max_abs_dy']:>8.3f} "
            f"{r['rms_dy']:>7.3f} {r['max_a_lat']:>9.3f} {math.degrees(r['max_abs_delta_f']):>10.2f} "
            f"{r['speed_rmse']:>7.3f}  {r['failure']}"
        )
    return "\n".join(lines)
