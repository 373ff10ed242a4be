# -*- coding: utf-8 -*-
"""
almab_svg.py
SVG-графики без зависимостей: фиксированный холст 800×500, линии, маркеры,
оси с «круглыми» делениями. Вывод детерминирован (фиксированное форматирование чисел).
"""

from __future__ import annotations

import html
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

WIDTH = 800
HEIGHT = 500
MARGIN = {"top": 50, "right": 30, "bottom": 60, "left": 80}
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _f(v: float) -> str:
    return f"{v:.2f}"


def nice_ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    """Деления с шагом 1/2/5·10^k, покрывающие [lo, hi]."""
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / max(count, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1.0, 2.0, 5.0, 10.0) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + step * 0.5:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.6g}"


class SvgBuilder:
    def __init__(self, width: int = WIDTH, height: int = HEIGHT):
        self.width = width
        self.height = height
        self.elements: List[str] = []

    def add_line(self, x1: float, y1: float, x2: float, y2: float, stroke: str = "#000",
                 stroke_width: float = 1, dash: Optional[str] = None, cls: Optional[str] = None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        extra += f' class="{cls}"' if cls else ""
        self.elements.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}" '
            f'stroke-width="{stroke_width}"{extra}/>'
        )

    def add_polyline(self, points: Sequence[Tuple[float, float]], stroke: str, stroke_width: float = 1.5):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.elements.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{stroke_width}"/>')

    def add_circle(self, cx: float, cy: float, r: float, fill: str, cls: str = "marker",
                   tooltip: Optional[str] = None):
        title = f"<title>{html.escape(tooltip)}</title>" if tooltip else ""
        self.elements.append(f'<circle class="{cls}" cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" fill="{fill}">{title}</circle>')

    def add_rect(self, x: float, y: float, w: float, h: float, fill: str, cls: str = "legend"):
        self.elements.append(f'<rect class="{cls}" x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}"/>')

    def add_text(self, x: float, y: float, text: str, anchor: str = "start", font_size: int = 12,
                 rotate: Optional[float] = None):
        tr = f' transform="rotate({_f(rotate)} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.elements.append(
            f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" font-size="{font_size}" '
            f'font-family="sans-serif"{tr}>{html.escape(text)}</text>'
        )

    def to_string(self) -> str:
        body = "\n".join(self.elements)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
            f"{body}\n</svg>\n"
        )


# ================== Charts ==================

@dataclass
class Series:
    name: str
    xs: Sequence[float]
    ys: Sequence[float]
    kind: str = "line"  # line | markers
    color: Optional[str] = None


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: List[Series] = field(default_factory=list)
    vlines: List[Tuple[float, str]] = field(default_factory=list)

    def _bounds(self) -> Tuple[float, float, float, float]:
        xs = [float(x) for s in self.series for x in s.xs] + [v for v, _ in self.vlines]
        ys = [float(y) for s in self.series for y in s.ys]
        xs = [x for x in xs if math.isfinite(x)] or [0.0, 1.0]
        ys = [y for y in ys if math.isfinite(y)] or [0.0, 1.0]
        return min(xs), max(xs), min(ys), max(ys)

    def render(self) -> str:
        svg = SvgBuilder()
        left, top = MARGIN["left"], MARGIN["top"]
        pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        x0, x1, y0, y1 = self._bounds()
        xt, yt = nice_ticks(x0, x1), nice_ticks(y0, y1)
        x0, x1 = min(x0, xt[0]), max(x1, xt[-1])
        y0, y1 = min(y0, yt[0]), max(y1, yt[-1])
        sx = pw / (x1 - x0) if x1 > x0 else 1.0
        sy = ph / (y1 - y0) if y1 > y0 else 1.0

        def px(x: float) -> float:
            return left + (x - x0) * sx

        def py(y: float) -> float:
            return top + ph - (y - y0) * sy

        svg.add_text(WIDTH / 2, 28, self.title, anchor="middle", font_size=16)
        svg.add_line(left, top + ph, left + pw, top + ph)
        svg.add_line(left, top, left, top + ph)
        for t in xt:
            svg.add_line(px(t), top + ph, px(t), top + ph + 5)
            svg.add_text(px(t), top + ph + 20, _tick_label(t), anchor="middle", font_size=11)
        for t in yt:
            svg.add_line(left - 5, py(t), left, py(t))
            svg.add_text(left - 8, py(t) + 4, _tick_label(t), anchor="end", font_size=11)
        svg.add_text(left + pw / 2, HEIGHT - 15, self.xlabel, anchor="middle")
        svg.add_text(20, top + ph / 2, self.ylabel, anchor="middle", rotate=-90)

        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            finite = [(float(x), float(y)) for x, y in zip(s.xs, s.ys) if math.isfinite(float(y))]
            pts = [(px(x), py(y)) for x, y in finite]
            if s.kind == "markers":
                for (cx, cy), (x, y) in zip(pts, finite):
                    svg.add_circle(cx, cy, 4, color, tooltip=f"{s.name}: x={x:.4g} y={y:.4g}")
            elif pts:
                svg.add_polyline(pts, color)
            ly = top + 14 * i
            svg.add_rect(left + pw - 150, ly - 8, 10, 10, color)
            svg.add_text(left + pw - 135, ly + 1, s.name, font_size=11)
        for v, label in self.vlines:
            svg.add_line(px(v), top, px(v), top + ph, stroke="#555", dash="4,3", cls="vline")
            svg.add_text(px(v) + 4, top + 12, label, font_size=11)
        return svg.to_string()


def line_chart(title: str, xlabel: str, ylabel: str, series: Sequence[Series],
               vlines: Sequence[Tuple[float, str]] = ()) -> str:
    return Chart(title, xlabel, ylabel, list(series), list(vlines)).render()


def count_markers(svg_text: str) -> int:
    return svg_text.count('class="marker"')
