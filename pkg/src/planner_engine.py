"""
Planner Engine for adaptive-lookahead policy iteration

This module contains the PlannerEngine class, the controller shared by every
planner. One round evaluates the current policy, lets an improvement rule fill
an action-value table at whichever states and depths it chooses, extracts the
next policy and records the round in the convergence trace. The engine stops
as soon as a round leaves the policy unchanged.

Usage:
    result = run_pi(mdp, pi0)
    result = run_tlpi(mdp, pi0, kappa=mdp.discount ** 3)
    schedule = QuantileSchedule.from_depths({2: 0.1, 4: 0.05, 8: 0.02})
    result = run_qlpi(mdp, pi0, schedule, v_star=v_tilde, order_slack_m=2)
"""

from typing import Dict, Protocol, Set

import numpy as np
from loguru import logger

from errors import InvalidArgumentError
from models import (
    ActionValueTable,
    ConvergenceTrace,
    EvaluationMethod,
    IterationRecord,
    LookaheadBackend,
    PlannerResult,
    Policy,
    QuantileSchedule,
    QueryLedger,
    State,
    TabularMdp,
    ValueFunction,
)
from systems.bellman import evaluate_policy, exact_optimal
from systems.lookahead import LookaheadSweep
from systems.planners import (
    FixedDepthRule,
    QuantileRule,
    ThresholdRule,
    h_kappa,
    pi_iteration_bound,
)


# incumbent action survives when within this relative margin of the best entry
TIE_TOLERANCE = 1e-10


class ImprovementRule(Protocol):
    """Decides which states receive which lookahead depth in one round."""

    max_depth: int

    def improve(
        self,
        mdp: TabularMdp,
        v_pi: ValueFunction,
        u: ActionValueTable,
        sweep: LookaheadSweep,
    ) -> Dict[int, Set[State]]:
        """Fill u and return the states improved at each depth."""
        ...


def extract_policy(u: ActionValueTable, incumbent: Policy) -> Policy:
    """
    Greedy extraction from U that keeps the incumbent action on near-ties.

    The incumbent stays when U(s, pi(s)) >= max_a U(s, a) - TIE_TOLERANCE * max(1, |max|);
    otherwise the lowest-index maximizer wins.
    """
    if not np.all(u.improved()):
        raise InvalidArgumentError("Every state must be improved before policy extraction")
    best = u.row_max()
    current = incumbent.as_array()
    incumbent_values = u.values[np.arange(len(current)), current]
    keep = incumbent_values >= best - TIE_TOLERANCE * np.maximum(1.0, np.abs(best))
    return Policy(actions=tuple(np.where(keep, current, np.argmax(u.values, axis=1))))


class PlannerEngine:
    """
    Policy-iteration controller parameterized by an improvement rule.

    The engine owns the query ledger of a run. Policy evaluation is exact and
    costs S evaluation queries per round; lookahead costs are charged by the
    sweep according to the selected backend.
    """

    def __init__(
        self,
        mdp: TabularMdp,
        rule: ImprovementRule,
        *,
        label: str,
        backend: LookaheadBackend = LookaheadBackend.TREE,
        reference: ValueFunction | None = None,
        max_iters: int | None = None,
        evaluation: EvaluationMethod = EvaluationMethod.DIRECT,
        setup_queries: int = 0,
    ):
        """
        Initialize the engine.

        Args:
            mdp: The MDP to plan in.
            rule: Improvement rule deciding lookahead depths per state.
            label: Name reported in results and rankings.
            backend: Lookahead backend used by the rule.
            reference: Exact V* used only for the trace's distance column.
                Computed with exact_optimal (uncharged) when omitted.
            max_iters: Round cap. Defaults to the PI bound plus two rounds.
            evaluation: Policy evaluation method.
            setup_queries: Queries spent before the run, e.g. on building an
                approximate V*; pre-loaded into the ledger.
        """
        self.mdp = mdp
        self.rule = rule
        self.label = label
        self.backend = LookaheadBackend(backend)
        self.evaluation = EvaluationMethod(evaluation)
        if reference is None:
            reference, _ = exact_optimal(mdp)
        reference.check(mdp)
        self.reference = reference
        if max_iters is None:
            max_iters = pi_iteration_bound(mdp.num_states, mdp.num_actions, mdp.discount) + 2
        if max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be positive, got {max_iters}")
        self.max_iters = max_iters
        self.ledger = QueryLedger()
        self.ledger.charge_setup(setup_queries)

    def run(self, pi0: Policy) -> PlannerResult:
        """
        Iterate until a round changes no action or max_iters rounds have run.

        Args:
            pi0: Initial policy.

        Returns:
            PlannerResult with the last evaluated policy and its value. A
            result that hit max_iters has converged=False.

        Raises:
            InvalidArgumentError: If pi0 does not fit the MDP.
        """
        pi0.check(self.mdp)
        S, A = self.mdp.num_states, self.mdp.num_actions
        logger.info(f"Running {self.label} on S={S}, A={A}, gamma={self.mdp.discount}")

        trace = ConvergenceTrace(max_depth=self.rule.max_depth)
        policy = pi0
        v_pi = None
        converged = False

        for iteration in range(self.max_iters):
            v_pi = evaluate_policy(self.mdp, policy, self.evaluation)
            self.ledger.charge_eval(S)

            u = ActionValueTable.fresh(S, A)
            sweep = LookaheadSweep(self.mdp, v_pi, self.backend, self.ledger)
            improved = self.rule.improve(self.mdp, v_pi, u, sweep)
            next_policy = extract_policy(u, policy)

            changes = sum(1 for a, b in zip(policy.actions, next_policy.actions) if a != b)
            deep_states = set().union(*(states for depth, states in improved.items() if depth >= 2))
            record = IterationRecord(
                iteration=iteration,
                distance_to_opt=self.reference.distance(v_pi),
                policy_changes=changes,
                states_improved_by_depth={d: len(improved[d]) for d in sorted(improved)},
                deep_fraction=len(deep_states) / S,
                ledger=self.ledger.snapshot(),
                value=v_pi.values,
            )
            trace.append(record)
            logger.debug(
                f"{self.label} iter={iteration} dist={record.distance_to_opt:.3e} "
                f"changes={changes} queries={self.ledger.total}"
            )

            if changes == 0:
                converged = True
                break
            # a capped run reports the last evaluated policy, not next_policy
            if iteration < self.max_iters - 1:
                policy = next_policy

        if not converged:
            logger.warning(f"{self.label} hit max_iters={self.max_iters} without a stable policy")

        return PlannerResult(
            label=self.label,
            policy=policy,
            value=v_pi,
            trace=trace,
            iterations=len(trace),
            converged=converged,
            ledger=self.ledger.snapshot(),
            mdp_fingerprint=self.mdp.fingerprint,
        )


def _resolve_reference(mdp: TabularMdp, reference: ValueFunction | None) -> ValueFunction:
    if reference is None:
        reference, _ = exact_optimal(mdp)
    return reference


def run_h_pi(
    mdp: TabularMdp,
    pi0: Policy,
    h: int,
    backend: LookaheadBackend = LookaheadBackend.TREE,
    max_iters: int | None = None,
    *,
    reference: ValueFunction | None = None,
    evaluation: EvaluationMethod = EvaluationMethod.DIRECT,
    label: str | None = None,
) -> PlannerResult:
    """
    h-step policy iteration.

    Args:
        mdp: The MDP.
        pi0: Initial policy.
        h: Lookahead depth, at least 1.
        backend: Lookahead backend.
        max_iters: Round cap, defaults to the PI bound plus two.
        reference: Exact V* for the trace; computed when omitted.
        evaluation: Policy evaluation method.
        label: Name in results, defaults to "hpi(h=<h>)".

    Returns:
        PlannerResult; converged=False when max_iters was hit.
    """
    engine = PlannerEngine(
        mdp,
        FixedDepthRule(depth=h),
        label=label or f"hpi(h={h})",
        backend=backend,
        reference=reference,
        max_iters=max_iters,
        evaluation=evaluation,
    )
    return engine.run(pi0)


def run_pi(
    mdp: TabularMdp,
    pi0: Policy,
    backend: LookaheadBackend = LookaheadBackend.TREE,
    max_iters: int | None = None,
    *,
    reference: ValueFunction | None = None,
    evaluation: EvaluationMethod = EvaluationMethod.DIRECT,
    label: str = "pi",
) -> PlannerResult:
    """Classic policy iteration: h-PI with h = 1."""
    return run_h_pi(
        mdp, pi0, 1, backend, max_iters, reference=reference, evaluation=evaluation, label=label
    )


def run_tlpi(
    mdp: TabularMdp,
    pi0: Policy,
    kappa: float,
    v_star: ValueFunction | None = None,
    beta: float = 0.0,
    backend: LookaheadBackend = LookaheadBackend.TREE,
    max_iters: int | None = None,
    *,
    reference: ValueFunction | None = None,
    setup_queries: int = 0,
    evaluation: EvaluationMethod = EvaluationMethod.DIRECT,
    label: str | None = None,
) -> PlannerResult:
    """
    Threshold-based lookahead policy iteration.

    Each round improves every state with a 1-step lookahead, then gives an
    h^(kappa)-step lookahead to every state s with
    |v_star(s) - max_a U(s, a)| > kappa * ||v_star - V^pi|| - beta.
    With h^(kappa) = 1 the deep pass is skipped and the run equals PI.

    Args:
        mdp: The MDP.
        pi0: Initial policy.
        kappa: Target contraction in (0, 1).
        v_star: V* or an approximation of it; exact V* when omitted.
        beta: Non-negative correction, see correction_beta.
        backend: Lookahead backend.
        max_iters: Round cap.
        reference: Exact V* for the trace; defaults to v_star when v_star
            is omitted, otherwise computed.
        setup_queries: Queries already spent on producing v_star.
        evaluation: Policy evaluation method.
        label: Name in results.

    Returns:
        PlannerResult whose trace carries the deep-improved fraction per round.

    Raises:
        InvalidArgumentError: If kappa is outside (0, 1), beta < 0 or v_star
            has the wrong length.
    """
    deep_depth = h_kappa(kappa, mdp.discount)
    if beta < 0:
        raise InvalidArgumentError(f"beta must be non-negative, got {beta}")
    if v_star is None:
        v_star = reference = _resolve_reference(mdp, reference)
    v_star.check(mdp)

    engine = PlannerEngine(
        mdp,
        ThresholdRule(kappa=kappa, guide=v_star, beta=beta, deep_depth=deep_depth),
        label=label or f"tlpi(kappa={kappa:.6g})",
        backend=backend,
        reference=reference,
        max_iters=max_iters,
        evaluation=evaluation,
        setup_queries=setup_queries,
    )
    return engine.run(pi0)


def run_qlpi(
    mdp: TabularMdp,
    pi0: Policy,
    schedule: QuantileSchedule,
    v_star: ValueFunction | None = None,
    order_slack_m: int = 0,
    backend: LookaheadBackend = LookaheadBackend.TREE,
    max_iters: int | None = None,
    *,
    reference: ValueFunction | None = None,
    setup_queries: int = 0,
    evaluation: EvaluationMethod = EvaluationMethod.DIRECT,
    label: str | None = None,
) -> PlannerResult:
    """
    Quantile-based lookahead policy iteration.

    Args:
        mdp: The MDP.
        pi0: Initial policy.
        schedule: Per-depth budgets with theta_1 = 1.
        v_star: V* or an approximation of it; exact V* when omitted.
        order_slack_m: Every theta_h is raised by m / S (clipped to 1) before
            the run; 0 keeps the schedule as given.
        backend: Lookahead backend.
        max_iters: Round cap.
        reference: Exact V* for the trace.
        setup_queries: Queries already spent on producing v_star.
        evaluation: Policy evaluation method.
        label: Name in results.

    Returns:
        PlannerResult.
    """
    effective = schedule.inflated(order_slack_m, mdp.num_states) if order_slack_m else schedule
    if v_star is None:
        v_star = reference = _resolve_reference(mdp, reference)
    v_star.check(mdp)

    if label is None:
        budgets = ",".join(f"{t:g}" for t in schedule.thetas[1:]) or "-"
        label = f"qlpi(thetas={budgets}" + (f",m={order_slack_m})" if order_slack_m else ")")

    engine = PlannerEngine(
        mdp,
        QuantileRule(schedule=effective, guide=v_star),
        label=label,
        backend=backend,
        reference=reference,
        max_iters=max_iters,
        evaluation=evaluation,
        setup_queries=setup_queries,
    )
    return engine.run(pi0)
