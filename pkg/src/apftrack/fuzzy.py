"""Fuzzy preview-time scheduler (Mamdani rules, singleton centroid).

Rule strength is the product of the two antecedent grades. With grades that
partition unity this makes the output a bilinear blend of the rule table,
so a table that is monotone along both axes gives a monotone schedule;
min-AND does not have that property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

LEVELS = ("S", "M", "L")


def left_shoulder(x: float, a: float, b: float) -> float:
    if x <= a:
        return 1.0
    if x >= b:
        return 0.0
    return (b - x) / (b - a)


def right_shoulder(x: float, a: float, b: float) -> float:
    if x <= a:
        return 0.0
    if x >= b:
        return 1.0
    return (x - a) / (b - a)


def triangle(x: float, a: float, b: float, c: float) -> float:
    if x <= a or x >= c:
        return 0.0
    if x <= b:
        return (x - a) / (b - a)
    return (c - x) / (c - b)


def memberships(x: float, bp: tuple[float, float, float, float]) -> dict[str, float]:
    """Small/Medium/Large grades over breakpoints (b0, b1, b2, b3).

    The three triangles peak at b0, b1 and b2; Small and Large are
    shoulders, so Small is full at b0 and Large is full from b2 up to the
    universe ceiling b3 (inputs beyond it saturate). Grades sum to one.
    """
    b0, b1, b2, _ = bp
    return {
        "S": left_shoulder(x, b0, b1),
        "M": triangle(x, b0, b1, b2),
        "L": right_shoulder(x, b1, b2),
    }


def _default_rules() -> dict[tuple[str, str], str]:
    # (deviation level, curvature level) -> preview-time level
    return {
        ("S", "S"): "VL", ("S", "M"): "N", ("S", "L"): "VS",
        ("M", "S"): "LG", ("M", "M"): "N", ("M", "L"): "VS",
        ("L", "S"): "VS", ("L", "M"): "VS", ("L", "L"): "VS",
    }


@dataclass(frozen=True)
class FuzzyPreviewConfig:
    dy_breakpoints: tuple[float, float, float, float] = (0.0, 0.15, 0.4, 1.0)
    kappa_breakpoints: tuple[float, float, float, float] = (0.0, 0.04, 0.08, 0.15)
    centroids: dict[str, float] = field(default_factory=lambda: {"VS": 0.6, "N": 1.0, "LG": 1.6, "VL": 2.0})
    rules: dict[tuple[str, str], str] = field(default_factory=_default_rules)
    tp_min: float = 0.6
    tp_max: float = 2.0

    def __post_init__(self) -> None:
        if self.tp_min < 0.3 or self.tp_max > 3.0 or self.tp_min > self.tp_max:
            raise ValueError("preview range must satisfy 0.3 <= tp_min <= tp_max <= 3")
        for bp in (self.dy_breakpoints, self.kappa_breakpoints):
            if list(bp) != sorted(bp) or len(set(bp)) != 4:
                raise ValueError("breakpoints must be 4 strictly increasing values")
        missing = [(a, b) for a in LEVELS for b in LEVELS if (a, b) not in self.rules]
        if missing:
            raise ValueError(f"rule table incomplete: {missing}")
        unknown = set(self.rules.values()) - set(self.centroids)
        if unknown:
            raise ValueError(f"rules reference undefined outputs {sorted(unknown)}")


def fuzzy_preview_time(dy_abs: float, kappa_abs: float, cfg: FuzzyPreviewConfig = FuzzyPreviewConfig()) -> float:
    """Preview time (s) from |lateral deviation| and |path curvature|."""
    if dy_abs < 0 or kappa_abs < 0:
        raise ValueError("inputs must be non-negative")
    mu_dy = memberships(dy_abs, cfg.dy_breakpoints)
    mu_k = memberships(kappa_abs, cfg.kappa_breakpoints)
    num = den = 0.0
    for (a, b), out in cfg.rules.items():
        w = mu_dy[a] * mu_k[b]
        if w > 0.0:
            num += w * cfg.centroids[out]
            den += w
    tp = num / den
    return min(max(tp, cfg.tp_min), cfg.tp_max)
