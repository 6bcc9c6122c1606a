"""Self-contained SVG line plots; the CSV next to each plot is the data of record."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "emit_plot"]

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 55
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple
    dashed: bool = False

    @classmethod
    def of(cls, label, x, y, dashed=False):
        x = tuple(float(v) for v in x)
        y = tuple(float(v) for v in y)
        if len(x) != len(y):
            raise ValueError(f"series {label!r}: x and y lengths differ")
        return cls(label, x, y, dashed)


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(v) for v in range(a, b + 1, step) if lo - 1e-9 <= v <= hi + 1e-9]
    span = hi - lo
    raw = span / 5 if span > 0 else 1.0
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:.2f}"


def _label(v, log):
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.4g}"


def emit_plot(series, path, *, title="", xlabel="x", ylabel="y", logx=False, logy=False) -> Path:
    """Write ``path`` (SVG) and ``path`` with a ``.csv`` suffix; returns the SVG path.

    Output depends only on the inputs, so identical data give identical bytes.
    Nonpositive values are dropped on log axes.
    """
    series = [s if isinstance(s, Series) else Series.of(*s) for s in series]
    if not series or all(len(s.x) == 0 for s in series):
        raise ValueError("nothing to plot: empty series")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.with_suffix(".csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "x", "y"])
        for s in series:
            for x, y in zip(s.x, s.y):
                w.writerow([s.label, repr(x), repr(y)])

    def tx(v, log):
        return math.log10(v) if log else v

    pts = []
    for s in series:
        xy = [(tx(x, logx), tx(y, logy)) for x, y in zip(s.x, s.y)
              if (x > 0 or not logx) and (y > 0 or not logy) and math.isfinite(x) and math.isfinite(y)]
        pts.append(xy)
    allp = [p for xy in pts for p in xy]
    if not allp:
        raise ValueError("no finite points to plot")
    xs, ys = np.array(allp).T
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    for v in _ticks(x0, x1, logx):
        out.append(f'<line x1="{_fmt(px(v))}" y1="{TOP + ph}" x2="{_fmt(px(v))}" '
                   f'y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(v))}" y="{TOP + ph + 18}" text-anchor="middle">'
                   f'{_label(v, logx)}</text>')
    for v in _ticks(y0, y1, logy):
        out.append(f'<line x1="{LEFT - 5}" y1="{_fmt(py(v))}" x2="{LEFT}" y2="{_fmt(py(v))}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(py(v) + 4)}" text-anchor="end">'
                   f'{_label(v, logy)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (s, xy) in enumerate(zip(series, pts)):
        color = COLORS[k % len(COLORS)]
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        if len(xy) > 1:
            coords = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in xy)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} '
                       f'points="{coords}"/>')
        for a, b in xy if len(xy) <= 40 else ():
            out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="2.5" fill="{color}"/>')
        ly = TOP + 16 + 16 * k
        out.append(f'<line x1="{LEFT + pw - 150}" y1="{ly}" x2="{LEFT + pw - 125}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{LEFT + pw - 120}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path
