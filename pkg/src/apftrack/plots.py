"""Dependency-free SVG plots of a closed-loop run."""

from __future__ import annotations

import math
from pathlib import Path

W, H = 640, 360
MARGIN = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12:
        out.append(round(v, 10))
        v += step
    return out


class Figure:
    def __init__(self, title: str, xlabel: str, ylabel: str, equal: bool = False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.equal = equal
        self.series: list[tuple[list, list, str, str]] = []
        self.circles: list[tuple[float, float, float, str]] = []

    def line(self, xs, ys, label: str = "", color: str | None = None) -> None:
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if y is not None and math.isfinite(y)]
        color = color or COLORS[len(self.series) % len(COLORS)]
        self.series.append(([p[0] for p in pts], [p[1] for p in pts], label, color))

    def circle(self, cx: float, cy: float, r: float, color: str = "#888888") -> None:
        self.circles.append((cx, cy, r, color))

    def _extent(self):
        xs = [x for s in self.series for x in s[0]] + [c[0] + d * c[2] for c in self.circles for d in (-1, 1)]
        ys = [y for s in self.series for y in s[1]] + [c[1] + d * c[2] for c in self.circles for d in (-1, 1)]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        if x1 - x0 < 1e-9:
            x0, x1 = x0 - 1, x1 + 1
        if y1 - y0 < 1e-9:
            y0, y1 = y0 - 1, y1 + 1
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad
        if self.equal:
            sx = (x1 - x0) / (W - 2 * MARGIN)
            sy = (y1 - y0) / (H - 2 * MARGIN)
            s = max(sx, sy)
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            x0, x1 = cx - s * (W - 2 * MARGIN) / 2, cx + s * (W - 2 * MARGIN) / 2
            y0, y1 = cy - s * (H - 2 * MARGIN) / 2, cy + s * (H - 2 * MARGIN) / 2
        return x0, x1, y0, y1

    def svg(self) -> str:
        x0, x1, y0, y1 = self._extent()

        def X(x):
            return MARGIN + (x - x0) / (x1 - x0) * (W - 2 * MARGIN)

        def Y(y):
            return H - MARGIN - (y - y0) / (y1 - y0) * (H - 2 * MARGIN)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
               '<rect width="100%" height="100%" fill="white"/>',
               f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14" font-family="sans-serif">{self.title}</text>',
               f'<rect x="{MARGIN}" y="{MARGIN}" width="{W - 2 * MARGIN}" height="{H - 2 * MARGIN}" fill="none" stroke="black"/>']
        for t in _ticks(x0, x1):
            out.append(f'<text x="{X(t):.1f}" y="{H - MARGIN + 15}" text-anchor="middle" font-size="10" font-family="sans-serif">{t:g}</text>')
        for t in _ticks(y0, y1):
            out.append(f'<text x="{MARGIN - 5}" y="{Y(t) + 3:.1f}" text-anchor="end" font-size="10" font-family="sans-serif">{t:g}</text>')
            out.append(f'<line x1="{MARGIN}" x2="{W - MARGIN}" y1="{Y(t):.1f}" y2="{Y(t):.1f}" stroke="#eeeeee"/>')
        out.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12" font-family="sans-serif">{self.xlabel}</text>')
        out.append(f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" font-family="sans-serif" '
                   f'transform="rotate(-90 14 {H / 2})">{self.ylabel}</text>')
        scale = (W - 2 * MARGIN) / (x1 - x0)
        for cx, cy, r, color in self.circles:
            out.append(f'<circle cx="{X(cx):.2f}" cy="{Y(cy):.2f}" r="{r * scale:.2f}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>')
        for i, (xs, ys, label, color) in enumerate(self.series):
            # thin very long series so the file stays small
            stride = max(1, len(xs) // 4000)
            pts = " ".join(f"{X(x):.2f},{Y(y):.2f}" for x, y in zip(xs[::stride], ys[::stride]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            if label:
                ly = MARGIN + 15 + 15 * i
                out.append(f'<line x1="{W - MARGIN - 110}" x2="{W - MARGIN - 90}" y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
                out.append(f'<text x="{W - MARGIN - 85}" y="{ly}" font-size="11" font-family="sans-serif">{label}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.svg(), encoding="utf-8")


def write_run_plots(records, path, scenario, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    t = [r.t for r in records]
    written = []

    fig = Figure("Path and trajectory", "X (m)", "Y (m)", equal=True)
    for ob in scenario.obstacles:
        fig.circle(ob.cx, ob.cy, ob.r)
    fig.line(path.x, path.y, "reference")
    fig.line([r.X for r in records], [r.Y for r in records], "vehicle")
    written.append(out_dir / "path.svg")
    fig.save(written[-1])

    panels = [
        ("dy.svg", "Lateral deviation", "dy (m)", [("dy", lambda r: r.dy)]),
        ("speed.svg", "Speed", "v (m/s)", [("v", lambda r: r.v), ("v_ref", lambda r: r.v_ref)]),
        ("steering_wheel.svg", "Steering-wheel angle", "deg", [("sw", lambda r: math.degrees(r.steering_wheel))]),
        ("a_lat.svg", "Lateral acceleration", "a_lat (m/s^2)", [("a_lat", lambda r: r.a_lat)]),
        ("tp.svg", "Preview time", "Tp (s)", [("Tp", lambda r: r.Tp)]),
    ]
    for name, title, ylabel, series in panels:
        fig = Figure(title, "t (s)", ylabel)
        for label, get in series:
            fig.line(t, [get(r) for r in records], label)
        written.append(out_dir / name)
        fig.save(written[-1])
    return written
