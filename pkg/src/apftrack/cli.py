"""Command line entry point.

    apftrack plan    --scenario park --out out/plan
    apftrack run     --scenario park --controller mpc --speed 50 --out out/run
    apftrack compare --scenario park --out out/compare

``--scenario`` takes a config file or the name of a bundled scenario.
Exit codes: 0 success, 2 validation error, 3 planner failure, 4 tracking failure.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .config import RunConfig, load_config
from .core import ValidationError
from .sim import PlanningFailed, compare, emit_path_csv, format_table, plan, run

EXIT_OK, EXIT_VALIDATION, EXIT_PLANNER, EXIT_TRACKING = 0, 2, 3, 4


def bundled_scenarios() -> list[str]:
    root = resources.files("apftrack") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def read_scenario_text(ref: str) -> str:
    p = Path(ref)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in bundled_scenarios():
        return (resources.files("apftrack") / "scenarios" / f"{name}.json").read_text(encoding="utf-8")
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r} "
                            f"(bundled: {', '.join(bundled_scenarios())})")


def load_run_config(ref: str, controller: str | None = None, speed_kmh: float | None = None) -> RunConfig:
    cfg = load_config(read_scenario_text(ref))
    if speed_kmh is not None:
        if not speed_kmh > 0:
            raise ValidationError("--speed must be > 0")
        cfg = cfg.with_speed_kmh(speed_kmh)
    if controller is not None:
        cfg = cfg.with_controller(controller)
    return cfg


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apftrack", description="Plan a path through a static obstacle field and track it.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("plan", "plan and smooth the reference path only"),
                        ("run", "plan, then track with one controller"),
                        ("compare", "track one planned path with both controllers at 30 and 50 km/h")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", default="park", help="config file or bundled scenario name (default: park)")
        p.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        if name != "compare":
            p.add_argument("--speed", type=float, default=None, help="set speed in km/h, overrides the scenario")
        if name == "run":
            p.add_argument("--controller", choices=("cc", "mpc"), default=None)
            p.add_argument("--no-plots", action="store_true", help="skip the SVG plots")
        if name == "compare":
            p.add_argument("--workers", type=int, default=1, help="runs executed concurrently")
    return ap


def _plan(cfg: RunConfig, out: Path) -> int:
    from .plots import Figure

    path = plan(cfg)
    out.mkdir(parents=True, exist_ok=True)
    emit_path_csv(path, out / "path.csv")
    fig = Figure("Planned path", "X (m)", "Y (m)", equal=True)
    for ob in cfg.scenario.obstacles:
        fig.circle(ob.cx, ob.cy, ob.r)
    fig.line(path.x, path.y, "reference")
    fig.save(out / "path.svg")
    print(f"path: {path.length:.1f} m, {len(path.s)} points, digest {path.digest()[:12]} -> {out}")
    return EXIT_OK


def _run(cfg: RunConfig, out: Path, plots: bool) -> int:
    m = run(cfg, out, plots=plots)
    print(f"{m.controller} at {m.v_set * 3.6:.0f} km/h: completed={m.completed} max|dy|={m.max_abs_dy:.3f} m "
          f"rms dy={m.rms_dy:.3f} m wallclock={m.wallclock:.1f} s -> {out}")
    if m.failure or not m.completed:
        kind = m.failure["kind"] if m.failure else "incomplete"
        print(f"tracking failure: {kind}", file=sys.stderr)
        return EXIT_TRACKING
    return EXIT_OK


def _compare(cfg: RunConfig, out: Path, workers: int) -> int:
    rows = compare(cfg, out, workers=workers)
    print(format_table(rows))
    return EXIT_TRACKING if any(r.failure or not r.completed for r in rows) else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out) if args.out else Path("out") / args.command
    try:
        cfg = load_run_config(args.scenario, getattr(args, "controller", None), getattr(args, "speed", None))
    except (ValidationError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "plan":
            return _plan(cfg, out)
        if args.command == "run":
            return _run(cfg, out, not args.no_plots)
        return _compare(cfg, out, max(1, args.workers))
    except PlanningFailed as exc:
        print(f"planner failure: {exc}", file=sys.stderr)
        return EXIT_PLANNER
    except ValidationError as exc:
        # speed profile or path checks on a planned geometry
        print(f"planner failure: {exc}", file=sys.stderr)
        return EXIT_PLANNER


if __name__ == "__main__":
    sys.exit(main())
