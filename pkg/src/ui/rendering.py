"""
Rich-based console rendering for adaptive-lookahead policy iteration.

All display functions for run summaries, rankings and feedback messages.
"""

import math
from typing import Iterable

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from models import PlannerResult, RankingRow, RunSummary


# Shared console instance
console = Console()


def render_error(msg: str, hint: str | None = None) -> None:
    """
    Display error message in a red-bordered Panel with optional hint.

    Args:
        msg: Main error message to display.
        hint: Optional hint text shown below the main message in dim style.
    """
    content = Text(msg, style="yellow")
    if hint:
        content.append(f"\n{hint}", style="dim")
    console.print()
    console.print(Panel(
        content,
        title="[bold yellow]Error[/bold yellow]",
        border_style="red",
        padding=(0, 2),
    ))


def render_success(msg: str) -> None:
    """
    Display success message in a green-bordered Panel.

    Args:
        msg: Success message to display.
    """
    console.print()
    console.print(Panel(
        Text(msg, style="bold green"),
        border_style="green",
        padding=(0, 2),
    ))


def _format_float(value: float) -> str:
    return "-" if math.isnan(value) else f"{value:,.1f}"


def render_results(title: str, results: Iterable[PlannerResult]) -> None:
    """
    Render one row per planner run: iterations, convergence and query split.

    Args:
        title: Table title, usually the environment name.
        results: Planner results to list in the given order.
    """
    table = Table(title=title, show_header=True, header_style="bold green")
    table.add_column("Planner", style="magenta")
    table.add_column("Iterations", justify="right")
    table.add_column("Converged", justify="center")
    table.add_column("Total queries", justify="right", style="cyan")
    table.add_column("Setup", justify="right")
    table.add_column("Eval", justify="right")
    table.add_column("Improve", justify="right")
    table.add_column("Max deep fraction", justify="right")

    for result in results:
        ledger = result.ledger
        table.add_row(
            result.label,
            str(result.iterations),
            "[green]yes[/green]" if result.converged else "[red]no[/red]",
            f"{result.total_queries:,}",
            f"{ledger.setup_queries:,}",
            f"{ledger.eval_queries:,}",
            f"{ledger.improve_queries:,}",
            f"{result.trace.max_deep_fraction:.3f}",
        )
    console.print()
    console.print(table)


def render_ranking(title: str, rows: Iterable[RankingRow]) -> None:
    """
    Render a query-count ranking, lowest total first.

    Args:
        title: Table title.
        rows: Ranking rows as produced by compare_query_counts.
    """
    table = Table(title=title, show_header=True, header_style="bold green")
    table.add_column("#", justify="right", style="dim")
    table.add_column("Planner", style="magenta")
    table.add_column("Total queries", justify="right", style="cyan")
    table.add_column("Iterations", justify="right")
    for row in rows:
        table.add_row(str(row.rank), row.label, f"{row.total_queries:,}", str(row.iterations))
    console.print()
    console.print(table)


def render_summaries(title: str, summaries: Iterable[RunSummary]) -> None:
    """
    Render mean and std over seeds per planner.

    Args:
        title: Table title.
        summaries: Per-label summaries as produced by summarize_runs.
    """
    table = Table(title=title, show_header=True, header_style="bold green")
    table.add_column("Planner", style="magenta")
    table.add_column("Runs", justify="right")
    table.add_column("Failures", justify="right")
    table.add_column("Mean queries", justify="right", style="cyan")
    table.add_column("Std queries", justify="right")
    table.add_column("Mean iterations", justify="right")
    for s in summaries:
        table.add_row(
            s.label,
            str(s.runs),
            f"[red]{s.failures}[/red]" if s.failures else "0",
            _format_float(s.mean_queries),
            _format_float(s.std_queries),
            _format_float(s.mean_iterations),
        )
    console.print()
    console.print(table)
