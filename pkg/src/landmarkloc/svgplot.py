"""Minimal deterministic SVG line plots.

Coordinates are written with fixed precision so that identical data always
gives identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

__all__ = ["Series", "nice_ticks", "line_plot"]

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=170, top=40, bottom=55)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    err: Sequence[float] | None = None
    dashed: bool = False


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("tick range must be finite")
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    k = 0
    while start + k * step <= hi + 1e-9 * step:
        ticks.append(round(start + k * step, 12))
        k += 1
    if ticks[-1] < hi:
        ticks.append(round(start + k * step, 12))
    return ticks


def _f(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:g}"


def line_plot(series: Sequence[Series], *, title: str, xlabel: str, ylabel: str,
              ylim: tuple[float, float] | None = None) -> str:
    """SVG text with axes, legend, one polyline per series and error bars."""
    if not series or not any(len(s.x) for s in series):
        raise ValueError("nothing to plot")
    xs = [v for s in series for v in s.x]
    lows = [y - (e if s.err is not None else 0.0) for s in series
            for y, e in zip(s.y, s.err if s.err is not None else [0.0] * len(s.y)) if math.isfinite(y)]
    highs = [y + (e if s.err is not None else 0.0) for s in series
             for y, e in zip(s.y, s.err if s.err is not None else [0.0] * len(s.y)) if math.isfinite(y)]
    xt = nice_ticks(min(xs), max(xs))
    yt = nice_ticks(*(ylim if ylim else (min(lows), max(highs))))
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{_f(MARGIN["left"] + pw / 2)}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    # axes and grid
    for t in xt:
        out.append(f'<line x1="{_f(px(t))}" y1="{_f(py(y0))}" x2="{_f(px(t))}" y2="{_f(py(y1))}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{_f(px(t))}" y="{_f(py(y0) + 18)}" text-anchor="middle">{_label(t)}</text>')
    for t in yt:
        out.append(f'<line x1="{_f(px(x0))}" y1="{_f(py(t))}" x2="{_f(px(x1))}" y2="{_f(py(t))}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{_f(px(x0) - 8)}" y="{_f(py(t) + 4)}" text-anchor="end">{_label(t)}</text>')
    out.append(f'<rect x="{_f(px(x0))}" y="{_f(py(y1))}" width="{_f(pw)}" height="{_f(ph)}" fill="none" stroke="black"/>')
    out.append(f'<text x="{_f(MARGIN["left"] + pw / 2)}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(18 {_f(MARGIN["top"] + ph / 2)}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    # data
    for k, s in enumerate(series):
        color = COLORS[k % len(COLORS)]
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        pts = [(px(x), py(y)) for x, y in zip(s.x, s.y) if math.isfinite(y)]
        if len(pts) > 1:
            path = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>')
        if s.err is not None:
            for x, y, e in zip(s.x, s.y, s.err):
                if math.isfinite(y) and math.isfinite(e):
                    out.append(f'<line x1="{_f(px(x))}" y1="{_f(py(y - e))}" x2="{_f(px(x))}" '
                               f'y2="{_f(py(y + e))}" stroke="{color}"/>')
        for a, b in pts:
            out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 12 + 20 * k
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="1.8"{dash}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
