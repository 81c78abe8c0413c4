"""
Improvement rules of the planning algorithms.

    - PI: 1-step improvement at every state.
    - h-PI: h-step improvement at every state.
    - TLPI: 1-step improvement everywhere, then an h^(kappa)-step improvement
      at every state whose 1-step value still misses a kappa-contraction
      test against V* (optionally an approximate V* with correction beta).
    - QLPI: per-depth budgets theta_h; depth h goes to the ceil(theta_h * S)
      states farthest from V*.

Each rule fills an ActionValueTable for one round of the PlannerEngine.

Usage:
    rule = ThresholdRule(kappa=gamma ** 3, guide=v_star, beta=0.0, deep_depth=h_kappa(gamma ** 3, gamma))
    _, selected = quantile_cutoff(distances, theta=0.1)
"""

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Sequence, Set, Tuple

import numpy as np

from errors import InvalidArgumentError
from models import (
    ActionValueTable,
    QuantileSchedule,
    State,
    TabularMdp,
    ValueFunction,
)
from systems.lookahead import LookaheadSweep, improve_states


# relative slack on the kappa-contraction test and on gamma^h <= kappa
CONTRACTION_SLACK = 1e-12
# guard so that theta * S landing a hair above an integer does not add a state
QUANTILE_COUNT_GUARD = 1e-9


def pi_iteration_bound(num_states: int, num_actions: int, gamma: float, h: int = 1) -> int:
    """
    Worst-case round count of h-step policy iteration:
    ceil((h log 1/gamma)^-1 S (A - 1) log 1/(1 - gamma)).
    """
    if h < 1:
        raise InvalidArgumentError(f"Lookahead depth must be at least 1, got {h}")
    bound = num_states * (num_actions - 1) * math.log(1.0 / (1.0 - gamma))
    return math.ceil(bound / (h * math.log(1.0 / gamma)))


def h_kappa(kappa: float, gamma: float) -> int:
    """
    Smallest h >= 1 with gamma^h <= kappa, by repeated multiplication.

    Raises:
        InvalidArgumentError: If kappa or gamma is outside (0, 1).
    """
    if not 0.0 < kappa < 1.0:
        raise InvalidArgumentError(f"kappa must lie strictly inside (0, 1), got {kappa}")
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    h, power = 1, gamma
    while power > kappa * (1.0 + CONTRACTION_SLACK):
        power *= gamma
        h += 1
    return h


def correction_beta(epsilon: float, kappa: float) -> float:
    """beta = epsilon * (kappa + 1) for a V* estimate with max-norm error epsilon."""
    if epsilon < 0:
        raise InvalidArgumentError(f"epsilon must be non-negative, got {epsilon}")
    return epsilon * (kappa + 1.0)


def tlpi_iteration_bound(num_states: int, num_actions: int, gamma: float, kappa: float) -> int:
    """ceil(((h^(kappa) - 1) log 1/gamma)^-1 S (A - 1) log 1/(1 - gamma)); PI bound when h^(kappa) = 1."""
    depth = h_kappa(kappa, gamma)
    if depth == 1:
        return pi_iteration_bound(num_states, num_actions, gamma)
    return pi_iteration_bound(num_states, num_actions, gamma, h=depth - 1)


def qlpi_iteration_bound(num_states: int, num_actions: int, gamma: float, kappa: float) -> int:
    """ceil((log 1/kappa)^-1 S (A - 1) log 1/(1 - gamma)) for an observed contraction kappa."""
    if kappa <= 0.0:
        return 1
    if kappa >= 1.0:
        raise InvalidArgumentError(f"Contraction must be below 1, got {kappa}")
    bound = num_states * (num_actions - 1) * math.log(1.0 / (1.0 - gamma))
    return math.ceil(bound / math.log(1.0 / kappa))


def quantile_cutoff(distances: Sequence[float], theta: float) -> Tuple[float, FrozenSet[State]]:
    """
    Select the min(ceil(theta * S), S) states with the largest distance.

    Ties are broken by lowest state index and +inf sorts above every finite
    distance.

    Args:
        distances: Per-state distances, +inf allowed.
        theta: Budget fraction in [0, 1].

    Returns:
        (threshold, selected) where threshold is the smallest selected
        distance, +inf when nothing is selected.
    """
    if not 0.0 <= theta <= 1.0:
        raise InvalidArgumentError(f"theta must lie in [0, 1], got {theta}")
    d = np.asarray(distances, dtype=float)
    S = len(d)
    count = 0 if theta == 0.0 else min(math.ceil(theta * S - QUANTILE_COUNT_GUARD), S)
    if count <= 0:
        return math.inf, frozenset()
    order = np.lexsort((np.arange(S), -d))
    selected = order[:count]
    return float(d[selected].min()), frozenset(int(s) for s in selected)


@dataclass
class FixedDepthRule:
    depth: int

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise InvalidArgumentError(f"Lookahead depth must be at least 1, got {self.depth}")

    @property
    def max_depth(self) -> int:
        return self.depth

    def improve(
        self, mdp: TabularMdp, v_pi: ValueFunction, u: ActionValueTable, sweep: LookaheadSweep
    ) -> Dict[int, Set[State]]:
        everyone = set(range(mdp.num_states))
        improve_states(mdp, v_pi, everyone, self.depth, sweep.backend, sweep.ledger, u, sweep)
        return {self.depth: everyone}


@dataclass
class ThresholdRule:
    """1-step everywhere, then depth h^(kappa) where |V*(s) - max_a U(s,a)| > kappa ||V* - V^pi|| - beta."""

    kappa: float
    guide: ValueFunction
    beta: float
    deep_depth: int

    @property
    def max_depth(self) -> int:
        return self.deep_depth

    def improve(
        self, mdp: TabularMdp, v_pi: ValueFunction, u: ActionValueTable, sweep: LookaheadSweep
    ) -> Dict[int, Set[State]]:
        everyone = set(range(mdp.num_states))
        improve_states(mdp, v_pi, everyone, 1, sweep.backend, sweep.ledger, u, sweep)
        improved: Dict[int, Set[State]] = {1: everyone}
        if self.deep_depth == 1:
            return improved

        norm = self.guide.distance(v_pi)
        cutoff = self.kappa * norm - self.beta + CONTRACTION_SLACK * max(1.0, norm)
        deep = {int(s) for s in np.flatnonzero(u.distances(self.guide) > cutoff)}
        improve_states(mdp, v_pi, deep, self.deep_depth, sweep.backend, sweep.ledger, u, sweep)
        improved[self.deep_depth] = deep
        return improved


@dataclass
class QuantileRule:
    """
    Depth-by-depth budgets. Depths shallower than the deepest theta_h = 1 are
    skipped since that depth overwrites every row anyway.
    """

    schedule: QuantileSchedule
    guide: ValueFunction

    @property
    def max_depth(self) -> int:
        return self.schedule.max_depth

    def improve(
        self, mdp: TabularMdp, v_pi: ValueFunction, u: ActionValueTable, sweep: LookaheadSweep
    ) -> Dict[int, Set[State]]:
        improved: Dict[int, Set[State]] = {}
        for depth in range(self.schedule.deepest_full_depth, self.schedule.max_depth + 1):
            theta = self.schedule.theta(depth)
            if theta == 0.0:
                continue
            # distances see rows already overwritten at shallower depths this round
            _, selected = quantile_cutoff(u.distances(self.guide), theta)
            improve_states(mdp, v_pi, selected, depth, sweep.backend, sweep.ledger, u, sweep)
            improved[depth] = set(selected)
        return improved
