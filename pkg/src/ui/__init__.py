"""UI rendering utilities for adaptive-lookahead policy iteration."""

from ui.charts import bar_chart, line_chart
from ui.rendering import (
    console,
    render_error,
    render_ranking,
    render_results,
    render_success,
    render_summaries,
)

__all__ = [
    "bar_chart",
    "console",
    "line_chart",
    "render_error",
    "render_ranking",
    "render_results",
    "render_success",
    "render_summaries",
]
