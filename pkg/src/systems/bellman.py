"""
Bellman operators, exact policy evaluation and the optimal-value oracle.

All operators are pure functions over an immutable TabularMdp. Action values
are computed from the cached sparse (S*A, S) transition matrix, so one call
costs one sparse mat-vec.

Usage:
    v = evaluate_policy(mdp, policy)
    greedy = greedy_policy(mdp, v)
    v_star, pi_star = solve_optimal(mdp, tol=1e-10)
    v_star, pi_star = exact_optimal(mdp)
"""

import numpy as np
from loguru import logger
from scipy import linalg

from errors import InvalidArgumentError, SolverError
from models import EvaluationMethod, Policy, TabularMdp, ValueFunction


DEFAULT_EVALUATION_TOL = 1e-12
DEFAULT_SOLVER_TOL = 1e-10
MAX_ITERATIVE_SWEEPS = 1_000_000
MAX_POLISH_ROUNDS = 100
POLISH_MARGIN = 1e-12


def _check_dimensions(mdp: TabularMdp, v: ValueFunction) -> None:
    if len(v) != mdp.num_states:
        raise InvalidArgumentError(
            f"Value vector has {len(v)} entries, MDP has {mdp.num_states} states"
        )


def _stopping_residual(tol: float, gamma: float) -> float:
    """Successive-iterate gap that guarantees max-norm error <= tol."""
    if tol <= 0:
        raise InvalidArgumentError(f"Tolerance must be positive, got {tol}")
    return tol * (1.0 - gamma) / gamma


def one_step_backups(mdp: TabularMdp, v: ValueFunction) -> np.ndarray:
    """
    S x A matrix of r(s, a) + gamma * sum_s' P(s'|s, a) v(s').

    Args:
        mdp: The MDP.
        v: Bootstrap values.

    Returns:
        Dense (S, A) array of one-step backups.

    Raises:
        InvalidArgumentError: If v does not have S entries.
    """
    _check_dimensions(mdp, v)
    expected = mdp.transition_matrix @ v.values
    return mdp.reward_matrix + mdp.discount * expected.reshape(mdp.num_states, mdp.num_actions)


def _policy_rows(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    policy.check(mdp)
    return np.arange(mdp.num_states) * mdp.num_actions + policy.as_array()


def apply_policy_operator(mdp: TabularMdp, policy: Policy, v: ValueFunction) -> ValueFunction:
    """T^pi[v] = r^pi + gamma * P^pi v."""
    _check_dimensions(mdp, v)
    rows = _policy_rows(mdp, policy)
    rewards = mdp.reward_matrix[np.arange(mdp.num_states), policy.as_array()]
    return ValueFunction(values=rewards + mdp.discount * (mdp.transition_matrix[rows] @ v.values))


def apply_optimality_operator(mdp: TabularMdp, v: ValueFunction) -> ValueFunction:
    """T[v](s) = max_a of the one-step backup."""
    return ValueFunction(values=one_step_backups(mdp, v).max(axis=1))


def evaluate_policy(
    mdp: TabularMdp,
    policy: Policy,
    method: EvaluationMethod = EvaluationMethod.DIRECT,
    tol: float = DEFAULT_EVALUATION_TOL,
) -> ValueFunction:
    """
    Compute V^pi.

    DIRECT solves (I - gamma P^pi) V = r^pi by dense elimination. ITERATIVE
    applies T^pi from zero until successive iterates differ by at most
    tol * (1 - gamma) / gamma, which bounds the max-norm error by tol.

    Args:
        mdp: The MDP.
        policy: Deterministic policy with S entries.
        method: EvaluationMethod.DIRECT or EvaluationMethod.ITERATIVE.
        tol: Target accuracy of the iterative method.

    Returns:
        The value function of the policy.

    Raises:
        InvalidArgumentError: If the policy does not fit the MDP.
        SolverError: If the solve produces non-finite values or the iteration
            fails to reach the residual.
    """
    rows = _policy_rows(mdp, policy)
    S = mdp.num_states
    rewards = mdp.reward_matrix[np.arange(S), policy.as_array()]
    kernel = mdp.transition_matrix[rows]

    if EvaluationMethod(method) is EvaluationMethod.DIRECT:
        system = np.eye(S) - mdp.discount * kernel.toarray()
        try:
            values = linalg.solve(system, rewards)
        except (linalg.LinAlgError, ValueError) as e:
            raise SolverError(
                "Direct policy evaluation failed",
                {"num_states": S, "discount": mdp.discount, "cause": type(e).__name__},
            ) from e
        if not np.all(np.isfinite(values)):
            raise SolverError(
                "Direct policy evaluation produced non-finite values",
                {"num_states": S, "discount": mdp.discount},
            )
        return ValueFunction(values=values)

    threshold = _stopping_residual(tol, mdp.discount)
    values = np.zeros(S)
    for sweep in range(1, MAX_ITERATIVE_SWEEPS + 1):
        updated = rewards + mdp.discount * (kernel @ values)
        gap = float(np.max(np.abs(updated - values)))
        values = updated
        if not np.isfinite(gap):
            raise SolverError("Iterative policy evaluation diverged", {"sweep": sweep})
        if gap <= threshold:
            return ValueFunction(values=values)
    raise SolverError(
        "Iterative policy evaluation did not reach its residual",
        {"sweeps": MAX_ITERATIVE_SWEEPS, "residual": gap, "threshold": threshold},
    )


def greedy_policy(mdp: TabularMdp, v: ValueFunction) -> Policy:
    """Per-state argmax of the one-step backup; ties go to the lowest action index."""
    return Policy(actions=tuple(np.argmax(one_step_backups(mdp, v), axis=1)))


def solve_optimal(mdp: TabularMdp, tol: float = DEFAULT_SOLVER_TOL) -> tuple[ValueFunction, Policy]:
    """
    Value iteration from zero followed by one greedy extraction.

    Stops once ||V_{k+1} - V_k|| <= tol * (1 - gamma) / gamma, so the returned
    value is within tol of V* in max-norm.

    Args:
        mdp: The MDP.
        tol: Max-norm accuracy of the returned value.

    Returns:
        (V*, pi*) tuple.
    """
    threshold = _stopping_residual(tol, mdp.discount)
    values = np.zeros(mdp.num_states)
    sweeps = 0
    while True:
        sweeps += 1
        updated = apply_optimality_operator(mdp, ValueFunction(values=values)).values
        gap = float(np.max(np.abs(updated - values)))
        values = updated
        if gap <= threshold:
            break

    v_star = ValueFunction(values=values)
    logger.debug(f"Value iteration converged after {sweeps} sweeps (S={mdp.num_states})")
    return v_star, greedy_policy(mdp, v_star)


def exact_optimal(mdp: TabularMdp, tol: float = DEFAULT_SOLVER_TOL) -> tuple[ValueFunction, Policy]:
    """
    solve_optimal followed by policy-iteration polishing with direct evaluation.

    The value iteration policy is re-evaluated exactly and improved wherever an
    action beats it by more than the polishing margin, so the returned value is
    V* to linear-solver precision rather than to tol.
    """
    _, policy = solve_optimal(mdp, tol)
    states = np.arange(mdp.num_states)
    for _ in range(MAX_POLISH_ROUNDS):
        value = evaluate_policy(mdp, policy)
        backups = one_step_backups(mdp, value)
        best = backups.max(axis=1)
        current = backups[states, policy.as_array()]
        better = best > current + POLISH_MARGIN * np.maximum(1.0, np.abs(best))
        if not better.any():
            return value, policy
        policy = Policy(actions=tuple(np.where(better, np.argmax(backups, axis=1), policy.as_array())))
    raise SolverError("Optimal policy polishing did not settle", {"rounds": MAX_POLISH_ROUNDS})
