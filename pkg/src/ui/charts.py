"""
Self-contained SVG charts.

    - line_chart: ||V* - V^pi_t|| against iteration for several traces, on a
      log10 axis (zero distances are drawn at the axis floor)
    - bar_chart: mean total queries per planner with +/- std whiskers

Usage:
    svg = line_chart({"pi": [1.0, 0.5, 0.0], "hpi(h=2)": [1.0, 0.0]})
    svg = bar_chart(summaries)
"""

import math
from typing import Dict, List, Sequence
from xml.sax.saxutils import escape

from errors import InvalidArgumentError
from models import RunSummary


WIDTH, HEIGHT = 720, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 180, 30, 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
LOG_FLOOR = 1e-12


def _plot_box() -> tuple[float, float, float, float]:
    return MARGIN_LEFT, MARGIN_TOP, WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM


def _document(body: List[str], title: str) -> str:
    header = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">'
    )
    caption = f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>'
    return "\n".join([header, '<rect width="100%" height="100%" fill="white"/>', caption, *body, "</svg>"]) + "\n"


def line_chart(series: Dict[str, Sequence[float]], title: str = "Distance to the optimum") -> str:
    """
    Line chart of per-iteration distances.

    Raises:
        InvalidArgumentError: If there is nothing to plot.
    """
    if not series or all(len(v) == 0 for v in series.values()):
        raise InvalidArgumentError("Line chart needs at least one non-empty series")
    x0, y0, w, h = _plot_box()
    logs = {
        name: [math.log10(max(d, LOG_FLOOR)) for d in values] for name, values in series.items()
    }
    lo = min(min(v) for v in logs.values() if v)
    hi = max(max(v) for v in logs.values() if v)
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    max_iter = max(max(len(v) - 1, 1) for v in series.values())

    def px(i: int) -> float:
        return x0 + w * i / max_iter

    def py(value: float) -> float:
        return y0 + h * (hi - value) / (hi - lo)

    body = [
        f'<line x1="{x0}" y1="{y0 + h}" x2="{x0 + w}" y2="{y0 + h}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 + h}" stroke="black"/>',
        f'<text x="{x0 + w / 2:.1f}" y="{HEIGHT - 20}" text-anchor="middle">iteration</text>',
        f'<text x="16" y="{y0 + h / 2:.1f}" transform="rotate(-90 16 {y0 + h / 2:.1f})" '
        f'text-anchor="middle">log10 distance</text>',
    ]
    for tick in range(math.ceil(lo), math.floor(hi) + 1):
        body.append(f'<text x="{x0 - 6}" y="{py(tick) + 4:.1f}" text-anchor="end">{tick}</text>')
    for tick in range(0, max_iter + 1, max(1, max_iter // 10)):
        body.append(f'<text x="{px(tick):.1f}" y="{y0 + h + 16}" text-anchor="middle">{tick}</text>')

    for k, (name, values) in enumerate(logs.items()):
        color = PALETTE[k % len(PALETTE)]
        points = " ".join(f"{px(i):.1f},{py(v):.1f}" for i, v in enumerate(values))
        body.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        legend_y = y0 + 16 * k + 8
        body.append(
            f'<rect x="{x0 + w + 12}" y="{legend_y - 8}" width="10" height="10" fill="{color}"/>'
            f'<text x="{x0 + w + 28}" y="{legend_y + 1}">{escape(name)}</text>'
        )
    return _document(body, title)


def bar_chart(summaries: Sequence[RunSummary], title: str = "Simulator queries until convergence") -> str:
    """
    Bar chart of mean total queries with std whiskers; runs without a mean are skipped.

    Raises:
        InvalidArgumentError: If no summary has a finite mean.
    """
    bars = [s for s in summaries if not math.isnan(s.mean_queries)]
    if not bars:
        raise InvalidArgumentError("Bar chart needs at least one summary with a finite mean")
    x0, y0, w, h = _plot_box()
    top = max(s.mean_queries + (0.0 if math.isnan(s.std_queries) else s.std_queries) for s in bars) or 1.0
    slot = w / len(bars)

    body = [
        f'<line x1="{x0}" y1="{y0 + h}" x2="{x0 + w}" y2="{y0 + h}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 + h}" stroke="black"/>',
        f'<text x="{x0 - 6}" y="{y0 + 4}" text-anchor="end">{top:,.0f}</text>',
        f'<text x="{x0 - 6}" y="{y0 + h + 4}" text-anchor="end">0</text>',
    ]
    for k, s in enumerate(bars):
        color = PALETTE[k % len(PALETTE)]
        bar_h = h * s.mean_queries / top
        left = x0 + slot * k + slot * 0.15
        center = x0 + slot * (k + 0.5)
        body.append(
            f'<rect x="{left:.1f}" y="{y0 + h - bar_h:.1f}" width="{slot * 0.7:.1f}" '
            f'height="{bar_h:.1f}" fill="{color}"/>'
        )
        if not math.isnan(s.std_queries) and s.std_queries > 0:
            lo = y0 + h - h * max(s.mean_queries - s.std_queries, 0.0) / top
            hi = y0 + h - h * (s.mean_queries + s.std_queries) / top
            body.append(f'<line x1="{center:.1f}" y1="{lo:.1f}" x2="{center:.1f}" y2="{hi:.1f}" stroke="black"/>')
        body.append(
            f'<text x="{center:.1f}" y="{y0 + h + 14}" text-anchor="end" '
            f'transform="rotate(-30 {center:.1f} {y0 + h + 14})">{escape(s.label)}</text>'
        )
    return _document(body, title)
