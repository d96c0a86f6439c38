"""Scenario/config documents (JSON) and their conversion to domain objects.

Layout::

    {
      "scenario":   {start, goal, obstacles, v_set | v_set_kmh, lambda_d,
                     bounds, controller, sim},
      "vehicle":    {VehicleParams fields},
      "planner":    {"apf": {...}, "smoothing": {...}, "speed": {...}},
      "controller": {"cc": {...}, "mpc": {...}, "tracking": {...}}
    }

Every section is optional except ``scenario``.  Angles may be given in
degrees with a ``_deg`` suffix and speeds in km/h with a ``_kmh`` suffix;
they are converted to SI on load and always written back in SI.
Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .apf import ApfConfig
from .cc import CcConfig
from .core import KMH, Bounds, Controller, Obstacle, Pose, Scenario, SimSettings, ValidationError, VehicleParams
from .fuzzy import LEVELS, FuzzyPreviewConfig
from .mpc import MpcConfig
from .smoothing import SmoothingConfig

ANGLE_FIELDS = {"theta", "du_bound", "u_bound"}
SPEED_FIELDS = {"v", "v_set"}


class ConfigError(ValidationError):
    """Malformed or invalid config document; the message names the field."""

    def __init__(self, where: str, msg: str, line: int | None = None):
        self.where = where
        self.line = line
        loc = f"line {line}, " if line else ""
        super().__init__(f"{loc}{where}: {msg}" if where else f"{loc}{msg}")


@dataclass(frozen=True)
class SpeedPlanSettings:
    a_dec_max: float = 2.5

    def __post_init__(self) -> None:
        if self.a_dec_max <= 0:
            raise ValidationError("a_dec_max must be > 0")


@dataclass(frozen=True)
class TrackingSettings:
    """Closed-loop harness settings.

    speed_lead: the speed command is read this far ahead in time along the
        path, to offset the lag of the first-order speed loop (s).
    """

    goal_tol: float = 1.0
    stop_speed: float = 0.5
    a_max: float = 2.0
    a_dec_max: float = 4.0
    k_v: float = 1.0
    speed_lead: float = 1.0
    diverge_guard: float = 10.0

    def __post_init__(self) -> None:
        for f in ("goal_tol", "stop_speed", "a_max", "a_dec_max", "k_v", "diverge_guard"):
            if getattr(self, f) <= 0:
                raise ValidationError(f"{f} must be > 0")
        if self.speed_lead < 0:
            raise ValidationError("speed_lead must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    apf: ApfConfig = field(default_factory=ApfConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    speed: SpeedPlanSettings = field(default_factory=SpeedPlanSettings)
    cc: CcConfig = field(default_factory=CcConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    tracking: TrackingSettings = field(default_factory=TrackingSettings)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def with_speed_kmh(self, kmh: float) -> "RunConfig":
        return self.replace(scenario=dataclasses.replace(self.scenario, v_set=kmh * KMH))

    def with_controller(self, c) -> "RunConfig":
        return self.replace(scenario=dataclasses.replace(self.scenario, controller=Controller(c)))


# ---------------------------------------------------------------- parsing

def _obj(data, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(where, f"expected an object, got {type(data).__name__}")
    return data


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(where, "must be finite")
    return float(v)


def _fields(cls) -> dict[str, dataclasses.Field]:
    return {f.name: f for f in dataclasses.fields(cls)}


def _build(cls, data, where: str, special=None):
    """Instantiate dataclass ``cls`` from ``data`` with unit aliases.

    ``special`` maps field names to converters (value, where) -> value for
    fields that are not plain scalars.
    """
    data = _obj(data, where)
    special = special or {}
    fields = _fields(cls)
    kw = {}
    for key, raw in data.items():
        name, scale = key, None
        if key.endswith("_deg") and key[:-4] in ANGLE_FIELDS:
            name, scale = key[:-4], math.pi / 180.0
        elif key.endswith("_kmh") and key[:-4] in SPEED_FIELDS:
            name, scale = key[:-4], KMH
        sub = f"{where}.{key}" if where else key
        if name not in fields:
            raise ConfigError(sub, f"unknown key (allowed: {', '.join(sorted(fields))})")
        if name in kw:
            raise ConfigError(sub, f"{name} given twice")
        if name in special:
            kw[name] = special[name](raw, sub)
            continue
        default = fields[name].default
        if isinstance(default, bool):
            if not isinstance(raw, bool):
                raise ConfigError(sub, f"expected true/false, got {raw!r}")
            kw[name] = raw
        elif isinstance(default, int) and not isinstance(default, bool) and scale is None:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigError(sub, f"expected an integer, got {raw!r}")
            kw[name] = raw
        elif isinstance(default, str):
            if not isinstance(raw, str):
                raise ConfigError(sub, f"expected a string, got {raw!r}")
            kw[name] = raw
        elif raw is None and default is None:
            kw[name] = None
        else:
            kw[name] = _number(raw, sub) * (scale or 1.0)
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(where, str(exc)) from None
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def _tuple_of_numbers(n):
    def conv(raw, where):
        if not isinstance(raw, list) or (n is not None and len(raw) != n):
            raise ConfigError(where, f"expected a list of {n} numbers")
        return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(raw))
    return conv


def _goal(raw, where):
    if isinstance(raw, dict):
        d = _obj(raw, where)
        extra = set(d) - {"X", "Y"}
        if extra or len(d) != 2:
            raise ConfigError(where, "goal object needs exactly X and Y")
        return (_number(d["X"], f"{where}.X"), _number(d["Y"], f"{where}.Y"))
    return _tuple_of_numbers(2)(raw, where)


def _obstacles(raw, where):
    if not isinstance(raw, list):
        raise ConfigError(where, "expected a list of obstacles")
    return tuple(_build(Obstacle, o, f"{where}[{i}]") for i, o in enumerate(raw))


def _centroids(raw, where):
    d = _obj(raw, where)
    return {k: _number(v, f"{where}.{k}") for k, v in d.items()}


def _rules(raw, where):
    d = _obj(raw, where)
    out = {}
    for a, row in d.items():
        if a not in LEVELS:
            raise ConfigError(f"{where}.{a}", f"level must be one of {LEVELS}")
        for b, res in _obj(row, f"{where}.{a}").items():
            if b not in LEVELS:
                raise ConfigError(f"{where}.{a}.{b}", f"level must be one of {LEVELS}")
            if not isinstance(res, str):
                raise ConfigError(f"{where}.{a}.{b}", "rule output must be a string")
            out[(a, b)] = res
    return out


def _fuzzy(raw, where):
    return _build(FuzzyPreviewConfig, raw, where, {
        "dy_breakpoints": _tuple_of_numbers(4),
        "kappa_breakpoints": _tuple_of_numbers(4),
        "centroids": _centroids,
        "rules": _rules,
    })


def _scenario(raw, where="scenario") -> Scenario:
    d = _obj(raw, where)
    if "start" not in d or "goal" not in d:
        raise ConfigError(where, "start and goal are required")
    return _build(Scenario, d, where, {
        "start": lambda r, w: _build(Pose, r, w),
        "goal": _goal,
        "obstacles": _obstacles,
        "bounds": lambda r, w: _build(Bounds, r, w),
        "controller": _controller,
        "sim": lambda r, w: _build(SimSettings, r, w),
    })


def _controller(raw, where):
    try:
        return Controller(raw)
    except ValueError:
        raise ConfigError(where, f"controller must be one of {[c.value for c in Controller]}") from None


def _sections(raw: dict, where: str, allowed: dict) -> dict:
    d = _obj(raw, where)
    out = {}
    for key, value in d.items():
        if key not in allowed:
            raise ConfigError(f"{where}.{key}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
        out[key] = allowed[key](value, f"{where}.{key}")
    return out


def _parse_json(text: str) -> dict:
    def no_dupes(pairs):
        seen = {}
        for k, v in pairs:
            if k in seen:
                raise ConfigError(k, "duplicate key")
            seen[k] = v
        return seen

    try:
        doc = json.loads(text, object_pairs_hook=no_dupes)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"parse error: {exc.msg} (column {exc.colno})", exc.lineno) from None
    return _obj(doc, "document")


def _with_line(exc: ConfigError, text: str) -> ConfigError:
    """Attach the line number of the innermost key named in ``exc.where``."""
    if exc.line or not exc.where:
        return exc
    key = exc.where.split(".")[-1].split("[")[0]
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            msg = str(exc).split(": ", 1)[1] if ": " in str(exc) else str(exc)
            return ConfigError(exc.where, msg, i)
    return exc


def load_config(text: str) -> RunConfig:
    """Parse a full config document."""
    try:
        doc = _parse_json(text)
        top = {"scenario", "vehicle", "planner", "controller"}
        for k in doc:
            if k not in top:
                raise ConfigError(k, f"unknown top-level key (allowed: {', '.join(sorted(top))})")
        if "scenario" not in doc:
            raise ConfigError("scenario", "missing required section")
        kw = {"scenario": _scenario(doc["scenario"])}
        if "vehicle" in doc:
            kw["vehicle"] = _build(VehicleParams, doc["vehicle"], "vehicle")
        if "planner" in doc:
            kw.update(_sections(doc["planner"], "planner", {
                "apf": lambda r, w: _build(ApfConfig, r, w),
                "smoothing": lambda r, w: _build(SmoothingConfig, r, w),
                "speed": lambda r, w: _build(SpeedPlanSettings, r, w),
            }))
        if "controller" in doc:
            kw.update(_sections(doc["controller"], "controller", {
                "cc": lambda r, w: _build(CcConfig, r, w, {"fuzzy": _fuzzy}),
                "mpc": lambda r, w: _build(MpcConfig, r, w, {"q_diag": _tuple_of_numbers(4)}),
                "tracking": lambda r, w: _build(TrackingSettings, r, w),
            }))
    except ConfigError as exc:
        raise _with_line(exc, text) from None
    return RunConfig(**kw)


def load_scenario(text: str) -> Scenario:
    """Parse a document and return only its validated Scenario."""
    return load_config(text).scenario


def load_config_file(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


# ---------------------------------------------------------- serialization

def _plain(obj):
    if isinstance(obj, Controller):
        return obj.value
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        if obj and all(isinstance(k, tuple) for k in obj):
            rules: dict = {}
            for (a, b), v in obj.items():
                rules.setdefault(a, {})[b] = v
            return rules
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def scenario_to_dict(s: Scenario) -> dict:
    return _plain(s)


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "scenario": _plain(cfg.scenario),
        "vehicle": _plain(cfg.vehicle),
        "planner": {"apf": _plain(cfg.apf), "smoothing": _plain(cfg.smoothing), "speed": _plain(cfg.speed)},
        "controller": {"cc": _plain(cfg.cc), "mpc": _plain(cfg.mpc), "tracking": _plain(cfg.tracking)},
    }


def serialize(obj) -> str:
    """JSON text for a Scenario or RunConfig, in SI units."""
    if isinstance(obj, Scenario):
        doc = {"scenario": scenario_to_dict(obj)}
    elif isinstance(obj, RunConfig):
        doc = config_to_dict(obj)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return json.dumps(doc, indent=2, sort_keys=False)
