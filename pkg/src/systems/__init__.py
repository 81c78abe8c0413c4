"""
Systems package for adaptive-lookahead policy iteration.

Contains the numerical systems that operate on the data models.
Systems are stateless processors; the only per-run state lives in the
PlannerEngine and the QueryLedger it owns.

Available systems:
    - bellman: Bellman operators, policy evaluation, value iteration
    - lookahead: h-step lookahead backends and the tree cost model
    - planners: improvement rules of PI, h-PI, TLPI and QLPI
    - analysis: contraction profiles, histograms, query rankings and audits
"""

from systems.analysis import (
    compare_query_counts,
    contraction_profile,
    histogram,
    lookahead_audit,
    pooled_histogram,
    round_cost_audit,
    summarize_runs,
    trace_profiles,
)
from systems.bellman import (
    apply_optimality_operator,
    apply_policy_operator,
    evaluate_policy,
    exact_optimal,
    greedy_policy,
    one_step_backups,
    solve_optimal,
)
from systems.lookahead import (
    LookaheadSweep,
    TreeCostModel,
    improve_states,
    optimality_layers,
    q_h_state,
    tree_query_cost,
)
from systems.planners import (
    FixedDepthRule,
    QuantileRule,
    ThresholdRule,
    correction_beta,
    h_kappa,
    pi_iteration_bound,
    qlpi_iteration_bound,
    quantile_cutoff,
    tlpi_iteration_bound,
)

__all__ = [
    "apply_optimality_operator",
    "apply_policy_operator",
    "compare_query_counts",
    "contraction_profile",
    "correction_beta",
    "evaluate_policy",
    "exact_optimal",
    "FixedDepthRule",
    "greedy_policy",
    "h_kappa",
    "histogram",
    "improve_states",
    "lookahead_audit",
    "LookaheadSweep",
    "one_step_backups",
    "optimality_layers",
    "pi_iteration_bound",
    "pooled_histogram",
    "q_h_state",
    "qlpi_iteration_bound",
    "QuantileRule",
    "quantile_cutoff",
    "round_cost_audit",
    "solve_optimal",
    "summarize_runs",
    "ThresholdRule",
    "tlpi_iteration_bound",
    "trace_profiles",
    "tree_query_cost",
    "TreeCostModel",
]
