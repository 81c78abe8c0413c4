"""
h-step lookahead improvement with simulator-query accounting.

Two backends produce the same action values:
    - TREE: forward search from each root state, expanding every action and
      every successor with non-zero probability. The ledger is charged the
      size of the full, unshared search tree (one query per expanded
      (state, action) pair) even though node values are memoized: each memo
      entry carries the expansion count of the subtree it stands for.
      Reset pairs (successor list equal to the MDP's reset distribution) are
      one expansion; their continuation is the shared layer W_{d-1}, charged
      like a DP layer.
    - DP: backward induction over whole-state-space Bellman layers
      W_0 = v, W_i = T[W_{i-1}]. Each computed layer costs S evaluation
      queries; no improvement queries are charged.

Usage:
    ledger = QueryLedger()
    u = ActionValueTable.fresh(mdp.num_states, mdp.num_actions)
    improve_states(mdp, v, {0, 3}, h=3, backend=LookaheadBackend.TREE, ledger=ledger, u=u)
"""

from typing import Dict, Iterable, List, Tuple

import numpy as np

from errors import InvalidArgumentError
from models import (
    ActionValueTable,
    LookaheadBackend,
    QueryLedger,
    State,
    TabularMdp,
    ValueFunction,
)
from systems.bellman import apply_optimality_operator


def _check_depth(h: int) -> None:
    if h < 1:
        raise InvalidArgumentError(f"Lookahead depth must be at least 1, got {h}")


def _check_state(mdp: TabularMdp, s: State) -> None:
    if not 0 <= s < mdp.num_states:
        raise InvalidArgumentError(f"State {s} is outside [0, {mdp.num_states})")


class TreeCostModel:
    """
    Memoized count of (node, action) expansions in a depth-h search tree.

    cost(s, 0) = 0 and cost(s, d) = sum_a (1 + sum_{s' : P(s'|s,a) > 0} cost(s', d - 1)),
    except that a reset pair contributes 1 and no children. The count depends
    only on the MDP's support, so one model serves a whole run.
    """

    def __init__(self, mdp: TabularMdp):
        self.mdp = mdp
        self._memo: Dict[Tuple[State, int], int] = {}

    def cost(self, s: State, h: int) -> int:
        if h == 0:
            return 0
        key = (s, h)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        total = 0
        for a, successors in enumerate(self.mdp.transitions[s]):
            total += 1
            if (s, a) in self.mdp.reset_pairs:
                continue
            for s2, p in successors:
                if p > 0.0:
                    total += self.cost(s2, h - 1)
        self._memo[key] = total
        return total

    def max_cost(self, h: int) -> int:
        return max(self.cost(s, h) for s in range(self.mdp.num_states))


def tree_query_cost(mdp: TabularMdp, s: State, h: int) -> int:
    """Ledger increment of one tree-backend lookahead of depth h rooted at s."""
    _check_depth(h)
    _check_state(mdp, s)
    return TreeCostModel(mdp).cost(s, h)


def optimality_layers(mdp: TabularMdp, v: ValueFunction, depth: int) -> ValueFunction:
    """T^depth[v]; depth 0 returns v."""
    if depth < 0:
        raise InvalidArgumentError(f"Layer depth must be non-negative, got {depth}")
    for _ in range(depth):
        v = apply_optimality_operator(mdp, v)
    return v


class LookaheadSweep:
    """
    Shared state of one improvement sweep over a fixed bootstrap vector v.

    Tree node values W_d(s) and DP layers are cached for the lifetime of the
    sweep; the ledger is charged per backend contract on every root lookahead.
    """

    def __init__(
        self,
        mdp: TabularMdp,
        v: ValueFunction,
        backend: LookaheadBackend,
        ledger: QueryLedger,
    ):
        if len(v) != mdp.num_states:
            raise InvalidArgumentError(
                f"Value vector has {len(v)} entries, MDP has {mdp.num_states} states"
            )
        self.mdp = mdp
        self.v = v
        self.backend = LookaheadBackend(backend)
        self.ledger = ledger
        self._node_values: Dict[Tuple[State, int], Tuple[float, int]] = {}
        self._layers: List[np.ndarray] = [v.values]

    def q_values(self, s: State, h: int) -> np.ndarray:
        """
        Q_h(s, .) = r(s, .) + gamma * E[W_{h-1}(s')].

        Args:
            s: Root state.
            h: Lookahead depth, at least 1.

        Returns:
            Array of A action values.
        """
        _check_depth(h)
        _check_state(self.mdp, s)
        if self.backend is LookaheadBackend.TREE:
            backups = [self._tree_backup(s, a, h) for a in range(self.mdp.num_actions)]
            self.ledger.charge_improve(h, sum(expansions for _, expansions in backups))
            return np.array([value for value, _ in backups])

        W = self._layer(h - 1)
        A = self.mdp.num_actions
        expected = self.mdp.transition_matrix[s * A:(s + 1) * A] @ W
        return self.mdp.reward_matrix[s] + self.mdp.discount * expected

    def _tree_backup(self, s: State, a: int, depth: int) -> Tuple[float, int]:
        """(Q value, expansions in the subtree) of the pair (s, a) with depth - 1 levels below."""
        if (s, a) in self.mdp.reset_pairs:
            expected = float(self.mdp.reset_vector @ self._layer(depth - 1))
            return self.mdp.rewards[s][a] + self.mdp.discount * expected, 1
        expected, expansions = 0.0, 1
        for s2, p in self.mdp.transitions[s][a]:
            if p > 0.0:
                value, below = self._tree_value(s2, depth - 1)
                expected += p * value
                expansions += below
        return self.mdp.rewards[s][a] + self.mdp.discount * expected, expansions

    def _tree_value(self, s: State, depth: int) -> Tuple[float, int]:
        if depth == 0:
            return float(self.v.values[s]), 0
        key = (s, depth)
        cached = self._node_values.get(key)
        if cached is None:
            backups = [self._tree_backup(s, a, depth) for a in range(self.mdp.num_actions)]
            cached = (max(value for value, _ in backups), sum(expansions for _, expansions in backups))
            self._node_values[key] = cached
        return cached

    def _layer(self, depth: int) -> np.ndarray:
        while len(self._layers) <= depth:
            previous = ValueFunction(values=self._layers[-1])
            self._layers.append(apply_optimality_operator(self.mdp, previous).values)
            self.ledger.charge_eval(self.mdp.num_states)
        return self._layers[depth]


def q_h_state(
    mdp: TabularMdp,
    v: ValueFunction,
    h: int,
    s: State,
    backend: LookaheadBackend,
    ledger: QueryLedger,
) -> np.ndarray:
    """
    h-step lookahead action values at a single state.

    Args:
        mdp: The MDP.
        v: Bootstrap vector W_0, usually V^pi of the current policy.
        h: Lookahead depth, at least 1.
        s: Root state.
        backend: LookaheadBackend.TREE or LookaheadBackend.DP.
        ledger: Query ledger charged per backend contract.

    Returns:
        Array of A action values.

    Raises:
        InvalidArgumentError: If h < 1, s is out of range or v has the wrong length.
    """
    return LookaheadSweep(mdp, v, backend, ledger).q_values(s, h)


def improve_states(
    mdp: TabularMdp,
    v: ValueFunction,
    states: Iterable[State],
    h: int,
    backend: LookaheadBackend,
    ledger: QueryLedger,
    u: ActionValueTable,
    sweep: LookaheadSweep | None = None,
) -> ActionValueTable:
    """
    Overwrite the rows of u at the given states with Q_h values.

    Rows outside states are untouched. States are processed in increasing
    index order so ledger increments and cached values are deterministic.
    A caller-owned sweep lets several depths of one iteration share caches.
    """
    _check_depth(h)
    sweep = sweep or LookaheadSweep(mdp, v, backend, ledger)
    for s in sorted(states):
        u.set_row(s, sweep.q_values(s, h))
    return u
