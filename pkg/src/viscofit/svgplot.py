"""Minimal static SVG plots (no GUI, no plotting dependency).

Good enough for response-curve figures: model lines overlaid on data points,
with axes, ticks and a small legend.
"""

from __future__ import annotations

import math

from .dataio import atomic_write_text

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f"]

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 36, 56


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


class SvgPlot:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series = []  # (kind, x, y, label, color)

    def line(self, x, y, label: str = ""):
        self.series.append(("line", list(x), list(y), label,
                            _COLORS[len(self.series) % len(_COLORS)]))

    def points(self, x, y, label: str = ""):
        self.series.append(("points", list(x), list(y), label,
                            _COLORS[len(self.series) % len(_COLORS)]))

    def _bounds(self):
        xs = [v for _, x, _, _, _ in self.series for v in x]
        ys = [v for _, _, y, _, _ in self.series for v in y]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()
        pw = _W - _ML - _MR
        ph = _H - _MT - _MB

        def sx(x):
            return _ML + (x - x0) / (x1 - x0) * pw

        def sy(y):
            return _MT + (1.0 - (y - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
            f'font-size="14">{self.title}</text>',
        ]
        for t in _nice_ticks(x0, x1):
            px = sx(t)
            out.append(f'<line x1="{px:.1f}" y1="{_MT}" x2="{px:.1f}" '
                       f'y2="{_MT + ph}" stroke="#eeeeee"/>')
            out.append(f'<text x="{px:.1f}" y="{_MT + ph + 16}" '
                       f'text-anchor="middle">{t:g}</text>')
        for t in _nice_ticks(y0, y1):
            py = sy(t)
            out.append(f'<line x1="{_ML}" y1="{py:.1f}" x2="{_ML + pw}" '
                       f'y2="{py:.1f}" stroke="#eeeeee"/>')
            out.append(f'<text x="{_ML - 6}" y="{py + 4:.1f}" '
                       f'text-anchor="end">{t:g}</text>')
        out.append(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" '
                   f'fill="none" stroke="#333333"/>')
        out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 14}" '
                   f'text-anchor="middle">{self.xlabel}</text>')
        out.append(f'<text x="18" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 18 {_MT + ph / 2:.1f})">{self.ylabel}</text>')

        for kind, xs, ys, _, color in self.series:
            if kind == "line":
                pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
                out.append(f'<polyline points="{pts}" fill="none" '
                           f'stroke="{color}" stroke-width="1.6"/>')
            else:
                for a, b in zip(xs, ys):
                    out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" '
                               f'r="2.4" fill="{color}" fill-opacity="0.75"/>')
        lx, ly = _ML + 10, _MT + 12
        for kind, _, _, label, color in self.series:
            if not label:
                continue
            marker = (f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                      f'stroke="{color}" stroke-width="2"/>' if kind == "line" else
                      f'<circle cx="{lx + 9}" cy="{ly - 4}" r="3" fill="{color}"/>')
            out.append(marker)
            out.append(f'<text x="{lx + 24}" y="{ly}">{label}</text>')
            ly += 16
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        atomic_write_text(path, self.render())
