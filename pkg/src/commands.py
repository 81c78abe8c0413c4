"""
Subcommand execution for adaptive-lookahead policy iteration.

Each command takes a validated ExperimentConfig (or input paths for render),
writes its artifacts below the configured output directory and returns the
process exit code. Exceptions are left to the CLI, which maps them to codes.

Usage:
    code = cmd_run(load_config(Path("configs/chain_pi.json")))
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from loguru import logger

from envs import render_layout
from errors import ConfigError, InvalidArgumentError, PlanningError
from experiment_setup import (
    ExperimentConfig,
    PlannerSpec,
    build_environment,
    iteration_bound,
    prepare,
    run_planner,
)
from models import ContractionProfile, Environment, PlannerResult, RunSummary, ValueFunction
from persistence import (
    load_comparison,
    load_trace_table,
    read_header,
    slugify,
    store_comparison,
    store_histograms,
    store_json,
    store_ledger,
    store_mdp,
    store_pooled_histogram,
    store_ranking,
    store_solution,
    store_text,
    store_trace,
)
from systems import (
    apply_optimality_operator,
    compare_query_counts,
    histogram,
    lookahead_audit,
    pooled_histogram,
    round_cost_audit,
    solve_optimal,
    summarize_runs,
    trace_profiles,
)
from ui import bar_chart, line_chart, render_ranking, render_results, render_success, render_summaries


EXIT_OK = 0
EXIT_NOT_CONVERGED = 3
SOLVE_TOL = 1e-10
THREADS_ENV = "ALPI_THREADS"


def worker_count() -> int:
    """
    Size of the sweep pool, read from ALPI_THREADS (default 1).

    Raises:
        ConfigError: If the variable is set to anything but a positive integer.
    """
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
    if workers < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
    return workers


def _nan_to_none(value: float) -> float | None:
    return None if math.isnan(value) else value


def _artifact_name(label: str, seed: int) -> str:
    return f"{slugify(label)}_seed{seed}.csv"


def _store_run(result: PlannerResult, seed: int, out: Path) -> None:
    store_trace(result.trace, out / "traces" / _artifact_name(result.label, seed))
    store_ledger(result.ledger, out / "ledgers" / _artifact_name(result.label, seed))


def cmd_solve(config: ExperimentConfig) -> int:
    """
    Write V*, pi* (value iteration at tol 1e-10) and the MDP of every seed.

    Files per seed: solution_seed{s}.json, mdp_seed{s}.json and, for mazes,
    maze_seed{s}.txt.
    """
    for seed in config.seeds:
        environment = build_environment(config.environment, seed)
        mdp = environment.mdp
        v_star, pi_star = solve_optimal(mdp, tol=SOLVE_TOL)
        residual = apply_optimality_operator(mdp, v_star).distance(v_star)
        logger.info(f"Solved {environment.name}: residual={residual:.3e}")

        store_solution(mdp, v_star, pi_star, residual, config.out / f"solution_seed{seed}.json")
        store_mdp(mdp, config.out / f"mdp_seed{seed}.json")
        if environment.layout is not None:
            store_text(render_layout(environment.layout), config.out / f"maze_seed{seed}.txt")

    render_success(f"Solved {len(config.seeds)} environment(s) into {config.out}")
    return EXIT_OK


def _run_record(result: PlannerResult, seed: int, spec: PlannerSpec, environment: Environment) -> Dict:
    bound = iteration_bound(spec, environment.mdp, result)
    cost_bound, cost_observed = round_cost_audit(environment.mdp, result.trace)
    return {
        "seed": seed,
        "iterations": result.iterations,
        "improvements": result.improvements,
        "converged": result.converged,
        "total_queries": result.total_queries,
        "setup_queries": result.ledger.setup_queries,
        "eval_queries": result.ledger.eval_queries,
        "improve_queries": result.ledger.improve_queries,
        "max_deep_fraction": result.trace.max_deep_fraction,
        "empirical_kappa": result.trace.empirical_kappa,
        "iteration_bound": bound,
        "within_iteration_bound": None if bound is None else result.iterations <= bound,
        "round_cost_bound": cost_bound,
        "max_round_improve_queries": cost_observed,
    }


def _store_histograms(
    result: PlannerResult, environment: Environment, exact: ValueFunction, seed: int, out: Path
) -> List[ContractionProfile]:
    """Write the per-round effective-lookahead histograms of a run and return its profiles."""
    profiles = trace_profiles(environment.mdp, exact, result.trace)
    per_iteration = [(iteration, histogram(profile)) for iteration, profile in profiles]
    store_histograms(per_iteration, out / "histograms" / _artifact_name(result.label, seed))
    invalid = sum(1 for _, profile in profiles if not profile.valid)
    if invalid:
        logger.warning(f"{result.label} seed={seed}: {invalid} round(s) with a contraction ratio above 1")
    return [profile for _, profile in profiles]


def cmd_run(config: ExperimentConfig) -> int:
    """
    Run the single configured planner on every seed.

    Writes one trace, ledger and effective-lookahead histogram CSV per seed,
    histograms/<label>_pooled.csv over every seed and round, and
    summary.json with the per-seed records (including the iteration-bound
    and per-round cost-bound audit) and the mean/std over converged seeds.

    Returns:
        0 when every seed converged, 3 otherwise.

    Raises:
        ConfigError: If the configuration expands to more than one planner.
    """
    if len(config.planners) != 1:
        raise ConfigError(
            f"'run' takes exactly one planner, the configuration expands to {len(config.planners)}",
        )
    spec = config.planners[0]

    results = []
    records = []
    profiles = []
    for seed in config.seeds:
        environment, exact = prepare(config, seed)
        result = run_planner(spec, environment, exact, config, seed)
        _store_run(result, seed, config.out)
        profiles.extend(_store_histograms(result, environment, exact, seed, config.out))
        results.append(result)
        records.append(_run_record(result, seed, spec, environment))
    if profiles:
        pooled_path = config.out / "histograms" / f"{slugify(spec.label)}_pooled.csv"
        store_pooled_histogram(pooled_histogram(profiles), pooled_path)

    summary = summarize_runs(results)[0]
    store_json(
        {
            "label": spec.label,
            "environment": config.environment.kind,
            "backend": config.backend.value,
            "runs": records,
            "failures": summary.failures,
            "mean_queries": _nan_to_none(summary.mean_queries),
            "std_queries": _nan_to_none(summary.std_queries),
            "mean_iterations": _nan_to_none(summary.mean_iterations),
            "std_iterations": _nan_to_none(summary.std_iterations),
        },
        config.out / "summary.json",
    )
    render_results(spec.label, results)

    if summary.failures:
        logger.warning(f"{summary.failures} of {summary.runs} seeds did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _run_seed(config: ExperimentConfig, seed: int) -> Tuple[int, List[PlannerResult], List[Dict]]:
    """
    Run every planner cell on one seed; a failing cell is recorded, not raised.

    Module-level so the process pool can pickle it.
    """
    try:
        environment, exact = prepare(config, seed)
    except (PlanningError, ArithmeticError) as e:
        logger.warning(f"seed={seed}: environment failed: {e}")
        return seed, [], [{"seed": seed, "label": spec.label, "error": str(e)} for spec in config.planners]

    results, failures = [], []
    for spec in config.planners:
        try:
            result = run_planner(spec, environment, exact, config, seed)
        except (PlanningError, ArithmeticError) as e:
            logger.warning(f"seed={seed} {spec.label}: {e}")
            failures.append({"seed": seed, "label": spec.label, "error": str(e)})
            continue
        _store_run(result, seed, config.out)
        results.append(result)
        if not result.converged:
            failures.append({"seed": seed, "label": spec.label, "error": "did not converge"})
    return seed, results, failures


def _store_audit(config: ExperimentConfig, summaries: List[RunSummary]) -> None:
    """Write audit.json when the sweep has a converged fixed-depth baseline."""
    fixed_depths = {
        spec.label: 1 if spec.kind == "pi" else spec.h for spec in config.planners if spec.kind in ("pi", "hpi")
    }
    approximate = [spec.label for spec in config.planners if spec.vstar.source != "exact"]
    try:
        audit = lookahead_audit(summaries, fixed_depths, approximate)
    except InvalidArgumentError as e:
        logger.debug(f"No lookahead audit: {e}")
        return
    store_json(audit, config.out / "audit.json")
    if not audit["interior_minimum"]:
        logger.warning(
            f"Fixed-depth query curve has no interior minimum; best is {audit['best_fixed']['label']}"
        )
    for entry in audit["adaptive"]:
        if not entry["within_limit"]:
            logger.warning(f"{entry['label']} exceeds {entry['limit']}x the best fixed-depth mean")


def cmd_sweep(config: ExperimentConfig) -> int:
    """
    Run every planner cell on every seed and compare query counts.

    Seeds are distributed over a process pool of ALPI_THREADS workers. Writes
    per-cell traces and ledgers, rankings_seed{s}.csv of the converged cells,
    comparison.csv (mean/std per planner), failures.json and, when PI or
    h-PI cells are present, audit.json comparing every adaptive cell with
    the best fixed-depth mean.

    Returns:
        0 when every cell converged, 3 otherwise.
    """
    workers = worker_count()
    logger.info(
        f"Sweeping {len(config.planners)} planner(s) x {len(config.seeds)} seed(s) with {workers} worker(s)"
    )

    outcomes = []
    if workers == 1:
        outcomes = [_run_seed(config, seed) for seed in config.seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_seed, config, seed) for seed in config.seeds]
            for future in as_completed(futures):
                outcomes.append(future.result())
    outcomes.sort(key=lambda outcome: outcome[0])

    all_results, all_failures = [], []
    for seed, results, failures in outcomes:
        all_results.extend(results)
        all_failures.extend(failures)
        converged = [r for r in results if r.converged]
        if converged:
            rows = compare_query_counts(converged)
            store_ranking(rows, config.out / f"rankings_seed{seed}.csv")
            render_ranking(f"seed {seed}", rows)

    summaries = summarize_runs(all_results)
    store_comparison(summaries, config.out / "comparison.csv")
    store_json({"failures": all_failures}, config.out / "failures.json")
    _store_audit(config, summaries)
    render_summaries(f"{config.environment.kind}: {len(config.seeds)} seed(s)", summaries)

    if all_failures:
        logger.warning(f"{len(all_failures)} sweep cell(s) failed or did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _input_kind(path: Path) -> str:
    header = read_header(path)
    if "dist_inf" in header:
        return "trace"
    if "mean_queries" in header:
        return "comparison"
    raise ConfigError(f"'{path}' is neither a trace nor a comparison CSV")


def cmd_render(inputs: Sequence[Path], out: Path) -> int:
    """
    Turn trace CSVs into a line chart, or one comparison CSV into a bar chart.

    Args:
        inputs: CSV files written by run or sweep.
        out: Destination SVG path.

    Raises:
        ConfigError: If no inputs are given, kinds are mixed, or more than one
            comparison CSV is passed.
        FileNotFoundError: If an input does not exist.
    """
    if not inputs:
        raise ConfigError("render needs at least one CSV input")
    kinds = {_input_kind(Path(p)) for p in inputs}
    if len(kinds) != 1:
        raise ConfigError("render takes either trace CSVs or a comparison CSV, not both")

    if kinds == {"trace"}:
        series = {Path(p).stem: load_trace_table(Path(p))["dist_inf"] for p in inputs}
        svg = line_chart(series)
    else:
        if len(inputs) != 1:
            raise ConfigError("render takes a single comparison CSV")
        svg = bar_chart(load_comparison(Path(inputs[0])))

    store_text(svg, out)
    render_success(f"Chart written to {out}")
    return EXIT_OK
