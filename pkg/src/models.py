import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import sparse

from errors import InvalidArgumentError


# type aliases
State = int
Action = int
Transition = Tuple[State, float]  # (next_state, probability)
Cell = Tuple[int, int]  # (row, col)

# "not yet improved" marker in action-value tables
SENTINEL = math.inf

PROBABILITY_TOLERANCE = 1e-12


class LookaheadBackend(str, Enum):
    TREE = "tree"
    DP = "dp"


class EvaluationMethod(str, Enum):
    DIRECT = "direct"
    ITERATIVE = "iterative"


@dataclass(frozen=True)
class TabularMdp:
    """
    Finite discounted MDP with sparse successor lists.

    transitions[s][a] is a tuple of (next_state, probability) pairs and
    rewards[s][a] the immediate reward of the pair. Instances are immutable;
    the dense reward matrix and the sparse (S*A, S) transition matrix are
    derived lazily and cached.

    reset is an optional shared restart distribution. Pairs whose successor
    list equals it are reset pairs: the next state does not depend on the
    history, so lookahead trees stop expanding there (see systems.lookahead).
    """

    num_states: int
    num_actions: int
    transitions: Tuple[Tuple[Tuple[Transition, ...], ...], ...]
    rewards: Tuple[Tuple[float, ...], ...]
    discount: float
    reset: Tuple[Transition, ...] = ()

    def __post_init__(self) -> None:
        # accept nested lists from callers, store tuples
        object.__setattr__(
            self,
            "transitions",
            tuple(
                tuple(tuple((int(s2), float(p)) for s2, p in row) for row in per_state)
                for per_state in self.transitions
            ),
        )
        object.__setattr__(
            self, "rewards", tuple(tuple(float(r) for r in row) for row in self.rewards)
        )
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "reset", tuple((int(s2), float(p)) for s2, p in self.reset))
        self._validate()

    def _validate(self) -> None:
        S, A = self.num_states, self.num_actions
        if S < 1 or A < 1:
            raise InvalidArgumentError(f"MDP needs at least one state and action, got S={S}, A={A}")
        if not 0.0 < self.discount < 1.0:
            raise InvalidArgumentError(f"Discount must lie strictly inside (0, 1), got {self.discount}")
        if len(self.transitions) != S or len(self.rewards) != S:
            raise InvalidArgumentError("Transition and reward tables must have one row per state")

        for s in range(S):
            if len(self.transitions[s]) != A or len(self.rewards[s]) != A:
                raise InvalidArgumentError(f"State {s} must define exactly {A} actions")
            for a in range(A):
                reward = self.rewards[s][a]
                if not math.isfinite(reward):
                    raise InvalidArgumentError(f"Reward r({s},{a}) is not finite")
                self._check_distribution(self.transitions[s][a], f"({s},{a})")
        if self.reset:
            self._check_distribution(self.reset, "the reset distribution")

    def _check_distribution(self, successors: Tuple[Transition, ...], name: str) -> None:
        if not successors:
            raise InvalidArgumentError(f"Pair {name} has no successors")
        total = 0.0
        for s2, p in successors:
            if not 0 <= s2 < self.num_states:
                raise InvalidArgumentError(f"Successor {s2} of {name} is out of range")
            if p < 0 or not math.isfinite(p):
                raise InvalidArgumentError(f"P({s2}) = {p} in {name} is not a probability")
            total += p
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise InvalidArgumentError(f"Probabilities of {name} sum to {total!r}, expected 1")

    @classmethod
    def from_arrays(cls, transitions: np.ndarray, rewards: np.ndarray, discount: float) -> "TabularMdp":
        """Build from a dense (S, A, S) kernel and an (S, A) reward matrix, dropping zero entries."""
        P = np.asarray(transitions, dtype=float)
        R = np.asarray(rewards, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2]:
            raise InvalidArgumentError(f"Inconsistent shapes P{P.shape} R{R.shape}")
        S, A, _ = P.shape
        successors = [
            [[(int(s2), float(P[s, a, s2])) for s2 in np.flatnonzero(P[s, a])] for a in range(A)]
            for s in range(S)
        ]
        return cls(num_states=S, num_actions=A, transitions=successors, rewards=R.tolist(), discount=discount)

    def successors(self, state: State, action: Action) -> Tuple[Transition, ...]:
        return self.transitions[state][action]

    @cached_property
    def reward_matrix(self) -> np.ndarray:
        matrix = np.array(self.rewards, dtype=float)
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def transition_matrix(self) -> sparse.csr_matrix:
        """Row s*A + a holds P(.|s, a)."""
        rows: List[int] = []
        cols: List[int] = []
        data: List[float] = []
        A = self.num_actions
        for s, per_state in enumerate(self.transitions):
            for a, successors in enumerate(per_state):
                for s2, p in successors:
                    rows.append(s * A + a)
                    cols.append(s2)
                    data.append(p)
        return sparse.csr_matrix(
            (data, (rows, cols)), shape=(self.num_states * A, self.num_states)
        )

    @cached_property
    def fingerprint(self) -> str:
        """Content hash used to check that planner results refer to the same MDP."""
        content = [self.num_states, self.num_actions, self.discount, self.rewards, self.transitions]
        if self.reset:
            content.append(self.reset)
        return hashlib.sha256(json.dumps(content).encode()).hexdigest()

    @cached_property
    def reset_pairs(self) -> FrozenSet[Tuple[State, Action]]:
        """(state, action) pairs whose successor list is the reset distribution."""
        if not self.reset:
            return frozenset()
        return frozenset(
            (s, a)
            for s, per_state in enumerate(self.transitions)
            for a, successors in enumerate(per_state)
            if successors == self.reset
        )

    @cached_property
    def reset_vector(self) -> np.ndarray:
        """Dense reset distribution over states; zeros when there is none."""
        vector = np.zeros(self.num_states)
        for s2, p in self.reset:
            vector[s2] += p
        vector.setflags(write=False)
        return vector

    @property
    def rewards_in_unit_interval(self) -> bool:
        return bool(np.all((self.reward_matrix >= 0.0) & (self.reward_matrix <= 1.0)))


@dataclass(frozen=True)
class Policy:
    actions: Tuple[Action, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    @classmethod
    def constant(cls, num_states: int, action: Action) -> "Policy":
        return cls(actions=(action,) * num_states)

    def check(self, mdp: TabularMdp) -> None:
        if len(self.actions) != mdp.num_states:
            raise InvalidArgumentError(
                f"Policy has {len(self.actions)} entries, MDP has {mdp.num_states} states"
            )
        if any(not 0 <= a < mdp.num_actions for a in self.actions):
            raise InvalidArgumentError(f"Policy uses an action outside [0, {mdp.num_actions})")

    def as_array(self) -> np.ndarray:
        return np.array(self.actions, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, state: State) -> Action:
        return self.actions[state]


@dataclass(frozen=True, eq=False)
class ValueFunction:
    values: np.ndarray

    def __post_init__(self) -> None:
        array = np.array(self.values, dtype=float)
        if array.ndim != 1:
            raise InvalidArgumentError(f"Value function must be a vector, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise InvalidArgumentError("Value function entries must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "values", array)

    def check(self, mdp: TabularMdp) -> None:
        if len(self.values) != mdp.num_states:
            raise InvalidArgumentError(
                f"Value vector has {len(self.values)} entries, MDP has {mdp.num_states} states"
            )

    def distance(self, other: "ValueFunction") -> float:
        """Max-norm distance."""
        return float(np.max(np.abs(self.values - other.values)))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, state: State) -> float:
        return float(self.values[state])


@dataclass
class ActionValueTable:
    """
    S x A table U of improved action values.

    Rows start at the +inf sentinel and are overwritten atomically, so a row is
    either entirely sentinel or entirely finite.
    """

    values: np.ndarray

    @classmethod
    def fresh(cls, num_states: int, num_actions: int) -> "ActionValueTable":
        return cls(values=np.full((num_states, num_actions), SENTINEL))

    def set_row(self, state: State, q_values: Sequence[float]) -> None:
        row = np.asarray(q_values, dtype=float)
        if row.shape != (self.values.shape[1],) or not np.all(np.isfinite(row)):
            raise InvalidArgumentError(f"Row for state {state} must hold {self.values.shape[1]} finite values")
        self.values[state] = row

    def row_max(self) -> np.ndarray:
        return self.values.max(axis=1)

    def improved(self) -> np.ndarray:
        return np.isfinite(self.values).all(axis=1)

    def distances(self, reference: ValueFunction) -> np.ndarray:
        """|reference(s) - max_a U(s, a)|, +inf on sentinel rows."""
        return np.abs(reference.values - self.row_max())


@dataclass
class QueryLedger:
    """
    Simulator-query counters. One query is one fetch of r(s, a) and P(.|s, a).
    """

    eval_queries: int = 0
    setup_queries: int = 0
    improve_queries_by_depth: Dict[int, int] = field(default_factory=dict)

    @staticmethod
    def _check(count: int) -> int:
        if count < 0:
            raise InvalidArgumentError(f"Query counters never decrease, got increment {count}")
        return int(count)

    def charge_eval(self, count: int) -> None:
        self.eval_queries += self._check(count)

    def charge_setup(self, count: int) -> None:
        self.setup_queries += self._check(count)

    def charge_improve(self, depth: int, count: int) -> None:
        current = self.improve_queries_by_depth.get(depth, 0)
        self.improve_queries_by_depth[depth] = current + self._check(count)

    def improve_at(self, depth: int) -> int:
        return self.improve_queries_by_depth.get(depth, 0)

    @property
    def improve_queries(self) -> int:
        return sum(self.improve_queries_by_depth.values())

    @property
    def total(self) -> int:
        return self.setup_queries + self.eval_queries + self.improve_queries

    def snapshot(self) -> "QueryLedger":
        return QueryLedger(
            eval_queries=self.eval_queries,
            setup_queries=self.setup_queries,
            improve_queries_by_depth=dict(self.improve_queries_by_depth),
        )

    def merge(self, other: "QueryLedger") -> None:
        self.charge_setup(other.setup_queries)
        self.charge_eval(other.eval_queries)
        for depth in sorted(other.improve_queries_by_depth):
            self.charge_improve(depth, other.improve_queries_by_depth[depth])

    def rows(self) -> List[Tuple[str, int, int]]:
        """(phase, depth, queries) rows; depth is 0 for non-improvement phases."""
        rows = [("setup", 0, self.setup_queries), ("eval", 0, self.eval_queries)]
        rows.extend(("improve", d, self.improve_queries_by_depth[d]) for d in sorted(self.improve_queries_by_depth))
        return rows


@dataclass(frozen=True)
class QuantileSchedule:
    """Per-depth budgets (theta_1, ..., theta_H); theta_1 must be 1."""

    thetas: Tuple[float, ...]

    def __post_init__(self) -> None:
        thetas = tuple(float(t) for t in self.thetas)
        object.__setattr__(self, "thetas", thetas)
        if not thetas:
            raise InvalidArgumentError("Quantile schedule needs at least one depth")
        if any(not 0.0 <= t <= 1.0 for t in thetas):
            raise InvalidArgumentError(f"Quantiles must lie in [0, 1], got {thetas}")
        if thetas[0] != 1.0:
            raise InvalidArgumentError(
                f"theta_1 must be 1 so every state receives an improvement, got {thetas[0]}"
            )

    @classmethod
    def from_depths(cls, budgets: Mapping[int, float], max_depth: int | None = None) -> "QuantileSchedule":
        """Schedule with theta_1 = 1 and the given budgets; unnamed depths get 0."""
        depths = [int(d) for d in budgets]
        if any(d < 1 for d in depths):
            raise InvalidArgumentError(f"Depths must be positive, got {sorted(depths)}")
        H = max([1, *depths] + ([max_depth] if max_depth else []))
        thetas = [0.0] * H
        thetas[0] = 1.0
        for depth, theta in budgets.items():
            thetas[int(depth) - 1] = float(theta)
        return cls(thetas=tuple(thetas))

    @property
    def max_depth(self) -> int:
        return len(self.thetas)

    def theta(self, depth: int) -> float:
        return self.thetas[depth - 1]

    def inflated(self, slack: int, num_states: int) -> "QuantileSchedule":
        """Every theta_h raised by slack / S, clipped to 1."""
        if slack < 0:
            raise InvalidArgumentError(f"Order slack must be non-negative, got {slack}")
        return QuantileSchedule(
            thetas=tuple(min(1.0, t + slack / num_states) for t in self.thetas)
        )

    @property
    def deepest_full_depth(self) -> int:
        return max(h for h in range(1, self.max_depth + 1) if self.theta(h) >= 1.0)


@dataclass
class IterationRecord:
    iteration: int
    distance_to_opt: float
    policy_changes: int
    states_improved_by_depth: Dict[int, int]
    deep_fraction: float
    ledger: QueryLedger
    value: np.ndarray = field(repr=False, compare=False)


@dataclass
class ConvergenceTrace:
    max_depth: int
    records: List[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def distances(self) -> List[float]:
        return [r.distance_to_opt for r in self.records]

    def contraction_ratios(self) -> List[float]:
        """||V* - V^{pi_{t+1}}|| / ||V* - V^{pi_t}|| for every t with a non-zero denominator."""
        d = self.distances
        return [after / before for before, after in zip(d, d[1:]) if before > 0.0]

    def ratio_series(self) -> List[float]:
        """Per-round ||V* - V^{pi_t}|| / ||V* - V^{pi_{t-1}}||; NaN for round 0 and zero denominators."""
        d = self.distances
        return [math.nan] + [after / before if before > 0.0 else math.nan for before, after in zip(d, d[1:])]

    @property
    def empirical_kappa(self) -> float:
        ratios = self.contraction_ratios()
        return max(ratios) if ratios else 0.0

    @property
    def max_deep_fraction(self) -> float:
        return max((r.deep_fraction for r in self.records), default=0.0)

    def is_non_increasing(self, tolerance: float = 1e-12) -> bool:
        d = self.distances
        return all(after <= before + tolerance for before, after in zip(d, d[1:]))


@dataclass
class PlannerResult:
    label: str
    policy: Policy
    value: ValueFunction
    trace: ConvergenceTrace
    iterations: int
    converged: bool
    ledger: QueryLedger
    mdp_fingerprint: str

    @property
    def total_queries(self) -> int:
        return self.ledger.total

    @property
    def improvements(self) -> int:
        return sum(1 for r in self.trace if r.policy_changes > 0)


@dataclass(frozen=True)
class MazeConfig:
    width: int = 30
    height: int = 30
    seed: int = 0
    num_goals: int = 4
    num_traps: int = 1
    gamma: float = 0.98
    doors_per_wall: int = 2

    def __post_init__(self) -> None:
        if self.width < 5 or self.height < 5:
            raise InvalidArgumentError(f"Maze must be at least 5x5, got {self.width}x{self.height}")
        if self.num_goals < 1 or self.num_traps < 0:
            raise InvalidArgumentError("Maze needs at least one goal and a non-negative trap count")
        if self.doors_per_wall != 2:
            raise InvalidArgumentError("Each dividing wall carries exactly two doors")


@dataclass(frozen=True)
class MazeLayout:
    """Generated grid: '#' wall, '.' free, plus goal/trap/spawn cells and the state index map."""

    config: MazeConfig
    walls: frozenset
    goals: Tuple[Cell, ...]
    traps: Tuple[Cell, ...]
    spawn: Cell
    cells: Tuple[Cell, ...]  # state index -> cell, row-major

    @cached_property
    def state_of_cell(self) -> Dict[Cell, State]:
        return {cell: s for s, cell in enumerate(self.cells)}

    @property
    def num_states(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class AggregationMap:
    group_of: Tuple[int, ...]
    num_groups: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "group_of", tuple(int(g) for g in self.group_of))
        present = set(self.group_of)
        if present != set(range(self.num_groups)):
            raise InvalidArgumentError(
                f"Aggregation map must use every group in [0, {self.num_groups}) at least once"
            )

    @classmethod
    def identity(cls, num_states: int) -> "AggregationMap":
        return cls(group_of=tuple(range(num_states)), num_groups=num_states)

    @property
    def lift(self) -> Tuple[int, ...]:
        """Position of each original state's value in the aggregated vector."""
        return self.group_of

    def members(self) -> List[List[State]]:
        groups: List[List[State]] = [[] for _ in range(self.num_groups)]
        for s, g in enumerate(self.group_of):
            groups[g].append(s)
        return groups


@dataclass(frozen=True, eq=False)
class ContractionProfile:
    ratios: np.ndarray
    effective_lookahead: np.ndarray  # +inf where the ratio is 0
    cap: float
    valid: bool

    def capped(self) -> np.ndarray:
        return np.minimum(self.effective_lookahead, self.cap)

    def __len__(self) -> int:
        return len(self.ratios)


@dataclass(frozen=True)
class RankingRow:
    rank: int
    label: str
    total_queries: int
    setup_queries: int
    eval_queries: int
    improve_queries: int
    iterations: int


@dataclass(frozen=True)
class RunSummary:
    label: str
    runs: int
    failures: int
    mean_queries: float
    std_queries: float
    mean_iterations: float
    std_iterations: float


@dataclass(frozen=True)
class Environment:
    """A built MDP with its starting policy and, for mazes, the layout it came from."""

    name: str
    mdp: TabularMdp
    initial_policy: Policy
    layout: MazeLayout | None = None
