"""
Result persistence for adaptive-lookahead policy iteration.

Handles the MDP interchange JSON format, optimal-solution files, trace and
ledger CSVs, rankings and run summaries. Floats are written with repr so
re-running an experiment reproduces byte-identical files; nothing carries a
timestamp. Every file is written to a temporary sibling and moved into place.
"""

import csv
import io
import json
import os
import re
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from loguru import logger

from models import (
    ConvergenceTrace,
    Policy,
    QueryLedger,
    RankingRow,
    RunSummary,
    TabularMdp,
    ValueFunction,
)


# Default output directory
RESULTS_DIR = Path("results")

TRACE_PREFIX = ["iter", "dist_inf", "changes", "queries_total", "queries_eval"]
COMPARISON_HEADER = [
    "label",
    "runs",
    "failures",
    "mean_queries",
    "std_queries",
    "mean_iterations",
    "std_iterations",
]
HISTOGRAM_HEADER = ["iteration", "bin_lo", "bin_hi", "fraction"]

HistogramBins = Sequence[Tuple[Tuple[float, float], float]]


def slugify(label: str) -> str:
    """File-name-safe version of a planner label."""
    return re.sub(r"[^A-Za-z0-9._=-]+", "_", label).strip("_")


def atomic_write_text(path: Path, text: str) -> None:
    """
    Write text to path via a temporary file in the same directory.

    Raises:
        OSError: If the directory cannot be created or written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.info(f"Wrote '{path}'")


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _json_text(payload: Dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


def serialize_mdp(mdp: TabularMdp) -> Dict:
    """
    Convert an MDP into the interchange format.

    Notes:
        - transitions[s][a] is a list of [next_state, probability] pairs.
        - Floats are stored with full precision.
        - "reset" is written only when the MDP has a restart distribution.

    Args:
        mdp: The MDP.

    Returns:
        Dict ready for JSON serialization.
    """
    document = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.discount,
        "rewards": [list(row) for row in mdp.rewards],
        "transitions": [
            [[[s2, p] for s2, p in successors] for successors in per_state]
            for per_state in mdp.transitions
        ],
    }
    if mdp.reset:
        document["reset"] = [[s2, p] for s2, p in mdp.reset]
    return document


def deserialize_mdp(data: Dict) -> TabularMdp:
    """
    Rebuild an MDP from the interchange format.

    Raises:
        KeyError: If a required key is missing.
        InvalidArgumentError: If the document violates the MDP invariants.
    """
    return TabularMdp(
        num_states=data["num_states"],
        num_actions=data["num_actions"],
        transitions=data["transitions"],
        rewards=data["rewards"],
        discount=data["gamma"],
        reset=data.get("reset", []),
    )


def store_mdp(mdp: TabularMdp, path: Path) -> None:
    atomic_write_text(path, _json_text(serialize_mdp(mdp)))


def load_mdp(path: Path) -> TabularMdp:
    """
    Load an MDP file.

    Raises:
        FileNotFoundError: If the file does not exist.
        json.JSONDecodeError: If the file is not valid JSON.
        KeyError: If the document is missing required keys.
    """
    with open(path, "r") as f:
        return deserialize_mdp(json.load(f))


def serialize_solution(mdp: TabularMdp, value: ValueFunction, policy: Policy, residual: float) -> Dict:
    return {
        "num_states": mdp.num_states,
        "gamma": mdp.discount,
        "residual": residual,
        "values": value.values.tolist(),
        "policy": list(policy.actions),
    }


def store_solution(mdp: TabularMdp, value: ValueFunction, policy: Policy, residual: float, path: Path) -> None:
    atomic_write_text(path, _json_text(serialize_solution(mdp, value, policy, residual)))


def load_value(path: Path) -> ValueFunction:
    """Read the "values" vector of a solution file."""
    with open(path, "r") as f:
        return ValueFunction(values=json.load(f)["values"])


def trace_header(max_depth: int) -> List[str]:
    depths = [f"queries_h{d}" for d in range(1, max_depth + 1)]
    return TRACE_PREFIX + depths + ["deep_fraction", "contraction_ratio"]


def trace_rows(trace: ConvergenceTrace) -> List[List]:
    """One CSV row per round; query columns are cumulative, contraction_ratio is NaN in round 0."""
    rows = []
    for record, ratio in zip(trace, trace.ratio_series()):
        ledger = record.ledger
        rows.append(
            [record.iteration, record.distance_to_opt, record.policy_changes, ledger.total, ledger.eval_queries]
            + [ledger.improve_at(d) for d in range(1, trace.max_depth + 1)]
            + [record.deep_fraction, ratio]
        )
    return rows


def trace_csv(trace: ConvergenceTrace) -> str:
    return _csv_text(trace_header(trace.max_depth), trace_rows(trace))


def store_trace(trace: ConvergenceTrace, path: Path) -> None:
    atomic_write_text(path, trace_csv(trace))


def read_header(path: Path) -> List[str]:
    """Column names of a CSV file; empty for an empty file."""
    with open(path, "r", newline="") as f:
        return next(csv.reader(f), [])


def load_trace_table(path: Path) -> Dict[str, List[float]]:
    """
    Read a trace (or any numeric) CSV into columns.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If a cell is not numeric.
    """
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        columns: Dict[str, List[float]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name, cell in row.items():
                columns[name].append(float(cell))
    return columns


def store_ledger(ledger: QueryLedger, path: Path) -> None:
    atomic_write_text(path, _csv_text(["phase", "depth", "queries"], ledger.rows()))


def store_ranking(rows: Iterable[RankingRow], path: Path) -> None:
    header = list(RankingRow.__dataclass_fields__)
    atomic_write_text(path, _csv_text(header, (list(asdict(r).values()) for r in rows)))


def store_comparison(summaries: Iterable[RunSummary], path: Path) -> None:
    rows = ([getattr(s, name) for name in COMPARISON_HEADER] for s in summaries)
    atomic_write_text(path, _csv_text(COMPARISON_HEADER, rows))


def load_comparison(path: Path) -> List[RunSummary]:
    """Read a comparison CSV written by store_comparison."""
    with open(path, "r", newline="") as f:
        return [
            RunSummary(
                label=row["label"],
                runs=int(row["runs"]),
                failures=int(row["failures"]),
                mean_queries=float(row["mean_queries"]),
                std_queries=float(row["std_queries"]),
                mean_iterations=float(row["mean_iterations"]),
                std_iterations=float(row["std_iterations"]),
            )
            for row in csv.DictReader(f)
        ]


def store_json(payload: Dict, path: Path) -> None:
    atomic_write_text(path, _json_text(payload))


def store_text(text: str, path: Path) -> None:
    atomic_write_text(path, text)


def store_histograms(per_iteration: Iterable[Tuple[int, HistogramBins]], path: Path) -> None:
    """One row per (round, effective-lookahead bin); the last bin ends at inf."""
    rows = (
        [iteration, lo, hi, fraction]
        for iteration, bins in per_iteration
        for (lo, hi), fraction in bins
    )
    atomic_write_text(path, _csv_text(HISTOGRAM_HEADER, rows))


def store_pooled_histogram(bins: HistogramBins, path: Path) -> None:
    rows = ([lo, hi, fraction] for (lo, hi), fraction in bins)
    atomic_write_text(path, _csv_text(HISTOGRAM_HEADER[1:], rows))
