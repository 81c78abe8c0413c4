"""
Post-processing of planner runs.

Contraction profiles measure, per state, how far one Bellman backup moves
V^pi toward V*, expressed as an effective lookahead log_gamma(ratio).
Rankings compare total simulator queries of converged runs on one MDP.

Usage:
    profile = contraction_profile(mdp, v_star, v_pi)
    bins = histogram(profile)
    ranking = compare_query_counts(results)
    audit = lookahead_audit(summarize_runs(results), {"pi": 1, "hpi(h=3)": 3})
"""

import math
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from errors import InvalidArgumentError, UndefinedProfileError
from models import (
    ContractionProfile,
    ConvergenceTrace,
    PlannerResult,
    RankingRow,
    RunSummary,
    TabularMdp,
    ValueFunction,
)
from systems.bellman import apply_optimality_operator
from systems.lookahead import TreeCostModel


EFFECTIVE_LOOKAHEAD_CAP = 20.0
DEFAULT_EDGES: Tuple[float, ...] = tuple(float(e) for e in range(1, 21))
DEGENERATE_DISTANCE = 1e-12
RATIO_SLACK = 1e-10
# adaptive mean queries relative to the best fixed-depth mean
ADAPTIVE_RATIO_LIMIT = 1.5
APPROXIMATE_RATIO_LIMIT = 2.0

Bin = Tuple[float, float]


def contraction_profile(
    mdp: TabularMdp,
    v_star: ValueFunction,
    v_pi: ValueFunction,
    cap: float = EFFECTIVE_LOOKAHEAD_CAP,
) -> ContractionProfile:
    """
    Per-state contraction of one optimal backup toward V*.

    rho(s) = |V*(s) - T[V^pi](s)| / ||V* - V^pi|| and e(s) = log rho(s) / log gamma,
    with e(s) = +inf where rho(s) = 0.

    Args:
        mdp: The MDP.
        v_star: Optimal values.
        v_pi: Value of the policy under inspection.
        cap: Effective lookahead reported by capped() and used as the last bin.

    Returns:
        ContractionProfile; valid is False when some ratio exceeds 1.

    Raises:
        UndefinedProfileError: If ||V* - V^pi|| <= 1e-12.
        InvalidArgumentError: On length mismatch.
    """
    v_star.check(mdp)
    v_pi.check(mdp)
    norm = v_star.distance(v_pi)
    if norm <= DEGENERATE_DISTANCE:
        raise UndefinedProfileError("Contraction profile is undefined when V^pi equals V*")

    backed_up = apply_optimality_operator(mdp, v_pi)
    ratios = np.abs(v_star.values - backed_up.values) / norm
    with np.errstate(divide="ignore"):
        effective = np.where(ratios > 0.0, np.log(ratios) / math.log(mdp.discount), math.inf)
    return ContractionProfile(
        ratios=ratios,
        effective_lookahead=effective,
        cap=cap,
        valid=bool(np.all(ratios <= 1.0 + RATIO_SLACK)),
    )


def _bins(edges: Sequence[float]) -> List[Bin]:
    if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidArgumentError(f"Bin edges must be non-empty and strictly increasing, got {edges}")
    return [(lo, hi) for lo, hi in zip(edges, edges[1:])] + [(edges[-1], math.inf)]


def _bin_counts(values: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    # below the first edge joins the first bin; +inf joins the last
    index = np.searchsorted(np.asarray(edges, dtype=float), values, side="right") - 1
    return np.bincount(np.clip(index, 0, len(edges) - 1), minlength=len(edges))


def histogram(
    profile: ContractionProfile, edges: Sequence[float] = DEFAULT_EDGES
) -> List[Tuple[Bin, float]]:
    """
    Fraction of states per effective-lookahead bin.

    Bins are [edges[i], edges[i+1]) plus a final [edges[-1], +inf] bin that
    takes every capped and zero-ratio state.

    Raises:
        InvalidArgumentError: If the profile is empty or edges are not increasing.
    """
    return pooled_histogram([profile], edges)


def pooled_histogram(
    profiles: Iterable[ContractionProfile], edges: Sequence[float] = DEFAULT_EDGES
) -> List[Tuple[Bin, float]]:
    """Histogram over the concatenated states of several profiles."""
    bins = _bins(edges)
    values = [p.effective_lookahead for p in profiles]
    if not values or sum(len(v) for v in values) == 0:
        raise InvalidArgumentError("Cannot build a histogram of an empty profile")
    pooled = np.concatenate(values)
    counts = _bin_counts(pooled, edges)
    return [(b, float(c) / len(pooled)) for b, c in zip(bins, counts)]


def trace_profiles(
    mdp: TabularMdp, v_star: ValueFunction, trace: ConvergenceTrace
) -> List[Tuple[int, ContractionProfile]]:
    """Profiles of every traced policy value not yet equal to V*."""
    profiles = []
    for record in trace:
        v_pi = ValueFunction(values=record.value)
        if v_star.distance(v_pi) > DEGENERATE_DISTANCE:
            profiles.append((record.iteration, contraction_profile(mdp, v_star, v_pi)))
    return profiles


def compare_query_counts(results: Iterable[PlannerResult]) -> List[RankingRow]:
    """
    Rank converged runs on one MDP by total queries, ascending; ties by label.

    Totals include setup queries, so runs guided by an aggregated V* pay for
    the aggregate solve.

    Raises:
        InvalidArgumentError: If results are empty, come from different MDPs,
            or include a non-converged run.
    """
    results = list(results)
    if not results:
        raise InvalidArgumentError("Nothing to rank")
    fingerprints = {r.mdp_fingerprint for r in results}
    if len(fingerprints) != 1:
        raise InvalidArgumentError(f"Results come from {len(fingerprints)} different MDPs")
    stalled = [r.label for r in results if not r.converged]
    if stalled:
        raise InvalidArgumentError(f"Only converged runs can be ranked, not: {', '.join(stalled)}")

    ordered = sorted(results, key=lambda r: (r.total_queries, r.label))
    return [
        RankingRow(
            rank=rank,
            label=r.label,
            total_queries=r.total_queries,
            setup_queries=r.ledger.setup_queries,
            eval_queries=r.ledger.eval_queries,
            improve_queries=r.ledger.improve_queries,
            iterations=r.iterations,
        )
        for rank, r in enumerate(ordered, start=1)
    ]


def summarize_runs(results: Iterable[PlannerResult]) -> List[RunSummary]:
    """
    Mean and population std of total queries and iterations per label.

    Non-converged runs count as failures and are left out of the statistics.
    """
    grouped: Dict[str, List[PlannerResult]] = defaultdict(list)
    for result in results:
        grouped[result.label].append(result)

    summaries = []
    for label in sorted(grouped):
        runs = grouped[label]
        ok = [r for r in runs if r.converged]
        queries = np.array([r.total_queries for r in ok], dtype=float)
        iterations = np.array([r.iterations for r in ok], dtype=float)
        summaries.append(
            RunSummary(
                label=label,
                runs=len(runs),
                failures=len(runs) - len(ok),
                mean_queries=float(queries.mean()) if ok else math.nan,
                std_queries=float(queries.std()) if ok else math.nan,
                mean_iterations=float(iterations.mean()) if ok else math.nan,
                std_iterations=float(iterations.std()) if ok else math.nan,
            )
        )
    return summaries


def round_cost_audit(mdp: TabularMdp, trace: ConvergenceTrace) -> Tuple[int, int]:
    """
    Largest per-round tree-query bound and the largest observed round.

    The bound of a round is sum_d n_d * max_s c(s, d) over the states n_d
    improved at depth d, which for TLPI is S c(1) + theta S c(h^(kappa)).
    Observed improvement queries come from the cumulative ledger snapshots
    and are zero under the DP backend.

    Returns:
        (bound, observed), both maxima over the rounds of the trace.
    """
    model = TreeCostModel(mdp)
    bound, observed, previous = 0, 0, 0
    for record in trace:
        round_bound = sum(
            count * model.max_cost(depth) for depth, count in record.states_improved_by_depth.items()
        )
        bound = max(bound, round_bound)
        observed = max(observed, record.ledger.improve_queries - previous)
        previous = record.ledger.improve_queries
    return bound, observed


def lookahead_audit(
    summaries: Iterable[RunSummary],
    fixed_depths: Mapping[str, int],
    approximate_labels: Iterable[str] = (),
) -> Dict:
    """
    Compare adaptive planners against the best fixed-depth mean query count.

    Args:
        summaries: Per-label statistics of one sweep.
        fixed_depths: Label -> h of every PI / h-PI cell.
        approximate_labels: Adaptive cells guided by an approximate V*; they
            are held to APPROXIMATE_RATIO_LIMIT instead of ADAPTIVE_RATIO_LIMIT.

    Returns:
        Dict with the fixed-depth curve, the best fixed depth, whether the
        curve has an interior minimum, and one entry per adaptive label.

    Raises:
        InvalidArgumentError: If no fixed-depth label has a finite mean.
    """
    summaries = list(summaries)
    approximate = set(approximate_labels)
    curve = sorted(
        (fixed_depths[s.label], s.label, s.mean_queries)
        for s in summaries
        if s.label in fixed_depths and math.isfinite(s.mean_queries)
    )
    if not curve:
        raise InvalidArgumentError("Audit needs at least one converged fixed-depth planner")
    best_depth, best_label, best_mean = min(curve, key=lambda point: (point[2], point[0]))
    depths = [depth for depth, _, _ in curve]

    adaptive = []
    for s in summaries:
        if s.label in fixed_depths:
            continue
        limit = APPROXIMATE_RATIO_LIMIT if s.label in approximate else ADAPTIVE_RATIO_LIMIT
        ratio = s.mean_queries / best_mean if math.isfinite(s.mean_queries) else math.inf
        adaptive.append(
            {
                "label": s.label,
                "mean_queries": s.mean_queries if math.isfinite(s.mean_queries) else None,
                "failures": s.failures,
                "ratio_to_best_fixed": ratio if math.isfinite(ratio) else None,
                "limit": limit,
                "within_limit": ratio <= limit and s.failures == 0,
            }
        )

    return {
        "fixed_curve": [{"h": depth, "label": label, "mean_queries": mean} for depth, label, mean in curve],
        "best_fixed": {"h": best_depth, "label": best_label, "mean_queries": best_mean},
        "interior_minimum": len(curve) >= 3 and depths[0] < best_depth < depths[-1],
        "adaptive": adaptive,
        "all_within_limit": all(entry["within_limit"] for entry in adaptive),
    }
