"""Minimal template-based SVG line plots (no external renderer)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from string import Template
from typing import List, Sequence

import numpy as np

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

_DOC = Template(
    '<svg xmlns="http://www.w3.org/2000/svg" width="$w" height="$h" '
    'viewBox="0 0 $w $h" font-family="sans-serif" font-size="11">\n'
    '<rect width="100%" height="100%" fill="white"/>\n$body</svg>\n'
)
_PANEL = Template(
    '<g transform="translate($ox,$oy)">\n'
    '<text x="$cx" y="-8" text-anchor="middle" font-size="13">$title</text>\n'
    '<rect x="0" y="0" width="$pw" height="$ph" fill="none" stroke="#444"/>\n'
    "$ticks$lines$legend"
    '<text x="$cx" y="$xl_y" text-anchor="middle">$xlabel</text>\n'
    '<text transform="translate(-42,$cy) rotate(-90)" text-anchor="middle">$ylabel</text>\n'
    "</g>\n"
)


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: List[Series]


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _range(values):
    v = np.asarray([u for u in values if math.isfinite(u)], dtype=float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _segments(xs, ys):
    """Split at non-finite points so gaps stay gaps."""
    seg = []
    for x, y in zip(xs, ys):
        if math.isfinite(x) and math.isfinite(y):
            seg.append((x, y))
        elif seg:
            yield seg
            seg = []
    if seg:
        yield seg


def _panel(p: Panel, ox, oy, pw, ph) -> str:
    xs = [float(u) for s in p.series for u in s.x]
    ys = [float(u) for s in p.series for u in s.y]
    x0, x1 = _range(xs)
    y0, y1 = _range(ys)

    def sx(v):
        return (v - x0) / (x1 - x0) * pw

    def sy(v):
        return ph - (v - y0) / (y1 - y0) * ph

    ticks = []
    for v in np.linspace(x0, x1, 5):
        ticks.append(f'<line x1="{sx(v):.2f}" y1="{ph}" x2="{sx(v):.2f}" y2="{ph + 4}" stroke="#444"/>'
                     f'<text x="{sx(v):.2f}" y="{ph + 16}" text-anchor="middle">{v:.3g}</text>\n')
    for v in np.linspace(y0, y1, 5):
        ticks.append(f'<line x1="-4" y1="{sy(v):.2f}" x2="0" y2="{sy(v):.2f}" stroke="#444"/>'
                     f'<text x="-6" y="{sy(v) + 4:.2f}" text-anchor="end">{v:.3g}</text>\n')
    lines, legend = [], []
    for i, s in enumerate(p.series):
        color = COLORS[i % len(COLORS)]
        for seg in _segments([float(u) for u in s.x], [float(u) for u in s.y]):
            pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in seg)
            lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>\n')
            if len(seg) == 1:
                x, y = seg[0]
                lines.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2" fill="{color}"/>\n')
        ly = 14 + 14 * i
        legend.append(f'<line x1="{pw - 110}" y1="{ly - 4}" x2="{pw - 92}" y2="{ly - 4}" '
                      f'stroke="{color}" stroke-width="2"/>'
                      f'<text x="{pw - 88}" y="{ly}">{_esc(s.label)}</text>\n')
    return _PANEL.substitute(
        ox=ox, oy=oy, pw=pw, ph=ph, cx=pw / 2, cy=ph / 2, xl_y=ph + 32,
        title=_esc(p.title), xlabel=_esc(p.xlabel), ylabel=_esc(p.ylabel),
        ticks="".join(ticks), lines="".join(lines), legend="".join(legend),
    )


def render(panels: Sequence[Panel], panel_w: int = 420, panel_h: int = 260) -> str:
    """Panels side by side, each with its own axes."""
    margin_l, margin_t, gap = 60, 30, 80
    w = margin_l + len(panels) * (panel_w + gap)
    h = margin_t + panel_h + 50
    body = "".join(
        _panel(p, margin_l + i * (panel_w + gap), margin_t, panel_w, panel_h)
        for i, p in enumerate(panels)
    )
    return _DOC.substitute(w=w, h=h, body=body)


def write_svg(path, panels: Sequence[Panel], **kw) -> None:
    with open(path, "w") as fh:
        fh.write(render(panels, **kw))
