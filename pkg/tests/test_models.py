"""
Tests for models module.

Tests MDP validation, policies, value functions, action-value tables,
query ledgers, quantile schedules and convergence traces.
"""
import math

import numpy as np
import pytest
from loguru import logger

from errors import InvalidArgumentError
from models import (
    ActionValueTable,
    AggregationMap,
    ConvergenceTrace,
    IterationRecord,
    MazeConfig,
    Policy,
    QuantileSchedule,
    QueryLedger,
    TabularMdp,
    ValueFunction,
)


# --- TabularMdp ---

def test_mdp_accepts_nested_lists_and_stores_tuples(two_state_mdp):
    """Test that constructor input is normalized to immutable tuples."""
    assert isinstance(two_state_mdp.transitions, tuple)
    assert two_state_mdp.successors(0, 1) == ((1, 1.0),)
    assert two_state_mdp.rewards[1] == (1.0, 0.0)


def test_mdp_rejects_probabilities_not_summing_to_one():
    """Test that a transition row summing to 0.9 is rejected."""
    with pytest.raises(InvalidArgumentError, match="sum to"):
        TabularMdp(num_states=1, num_actions=1, transitions=[[[(0, 0.9)]]], rewards=[[0.0]], discount=0.5)


@pytest.mark.parametrize("discount", [0.0, 1.0, -0.1, 1.5])
def test_mdp_rejects_discount_outside_open_interval(discount):
    """Test that gamma must lie strictly inside (0, 1)."""
    with pytest.raises(InvalidArgumentError, match="Discount"):
        TabularMdp(num_states=1, num_actions=1, transitions=[[[(0, 1.0)]]], rewards=[[0.0]], discount=discount)


def test_mdp_rejects_out_of_range_successor():
    """Test that successor indices must be valid states."""
    with pytest.raises(InvalidArgumentError, match="out of range"):
        TabularMdp(num_states=1, num_actions=1, transitions=[[[(3, 1.0)]]], rewards=[[0.0]], discount=0.5)


def test_mdp_rejects_missing_action_row():
    """Test that every state must define every action."""
    with pytest.raises(InvalidArgumentError, match="exactly 2 actions"):
        TabularMdp(num_states=1, num_actions=2, transitions=[[[(0, 1.0)]]], rewards=[[0.0, 0.0]], discount=0.5)


def test_mdp_rejects_non_finite_reward():
    """Test that rewards must be finite."""
    with pytest.raises(InvalidArgumentError, match="not finite"):
        TabularMdp(num_states=1, num_actions=1, transitions=[[[(0, 1.0)]]], rewards=[[math.nan]], discount=0.5)


def test_transition_matrix_rows_are_state_action_pairs(two_state_mdp):
    """Test that row s*A + a of the sparse matrix is P(.|s, a)."""
    dense = two_state_mdp.transition_matrix.toarray()
    logger.info(dense)

    assert dense.shape == (4, 2)
    np.testing.assert_array_equal(dense[1], [0.0, 1.0])  # (0, a=1) moves to state 1
    np.testing.assert_array_equal(dense[3], [1.0, 0.0])  # (1, a=1) moves to state 0


def test_reward_matrix_is_read_only(two_state_mdp):
    """Test that the cached reward matrix cannot be mutated."""
    with pytest.raises(ValueError):
        two_state_mdp.reward_matrix[0, 0] = 5.0


def test_from_arrays_drops_zero_probabilities():
    """Test dense construction keeps only non-zero successors."""
    P = np.zeros((2, 1, 2))
    P[0, 0] = [0.25, 0.75]
    P[1, 0] = [0.0, 1.0]
    mdp = TabularMdp.from_arrays(P, np.zeros((2, 1)), 0.5)

    assert mdp.successors(0, 0) == ((0, 0.25), (1, 0.75))
    assert mdp.successors(1, 0) == ((1, 1.0),)


def test_fingerprint_distinguishes_discounts(make_chain):
    """Test that equal structure with a different gamma hashes differently."""
    assert make_chain(5, 0.9).fingerprint == make_chain(5, 0.9).fingerprint
    assert make_chain(5, 0.9).fingerprint != make_chain(5, 0.8).fingerprint


def _restarting_mdp(reset) -> TabularMdp:
    # state 2 restarts uniformly over {0, 1} under both actions
    restart = [(0, 0.5), (1, 0.5)]
    return TabularMdp(
        num_states=3,
        num_actions=2,
        transitions=[
            [[(1, 1.0)], [(2, 1.0)]],
            [[(0, 1.0)], restart],
            [restart, restart],
        ],
        rewards=[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]],
        discount=0.9,
        reset=reset,
    )


def test_reset_pairs_match_the_restart_distribution():
    """Test that every pair whose successors equal the reset is detected."""
    mdp = _restarting_mdp([[0, 0.5], [1, 0.5]])

    assert mdp.reset == ((0, 0.5), (1, 0.5))
    assert mdp.reset_pairs == {(1, 1), (2, 0), (2, 1)}
    np.testing.assert_allclose(mdp.reset_vector, [0.5, 0.5, 0.0])


def test_mdp_without_reset_has_no_reset_pairs(two_state_mdp):
    """Test the default empty restart distribution."""
    assert two_state_mdp.reset == ()
    assert two_state_mdp.reset_pairs == frozenset()
    assert not two_state_mdp.reset_vector.any()


def test_mdp_rejects_invalid_reset_distribution():
    """Test that the reset must be a distribution over known states."""
    with pytest.raises(InvalidArgumentError, match="reset"):
        _restarting_mdp([(0, 0.5), (1, 0.25)])
    with pytest.raises(InvalidArgumentError, match="reset"):
        _restarting_mdp([(5, 1.0)])


def test_fingerprint_covers_the_reset():
    """Test that declaring a reset changes the hash of otherwise equal MDPs."""
    assert _restarting_mdp([(0, 0.5), (1, 0.5)]).fingerprint != _restarting_mdp(()).fingerprint


# --- Policy and ValueFunction ---

def test_policy_check_rejects_wrong_length(two_state_mdp):
    """Test that policies must cover every state."""
    with pytest.raises(InvalidArgumentError, match="entries"):
        Policy(actions=(0,)).check(two_state_mdp)


def test_policy_check_rejects_unknown_action(two_state_mdp):
    """Test that policies may only use existing actions."""
    with pytest.raises(InvalidArgumentError, match="action outside"):
        Policy(actions=(0, 2)).check(two_state_mdp)


def test_value_function_distance_is_max_norm():
    """Test max-norm distance between value vectors."""
    a = ValueFunction(values=[1.0, 2.0, 3.0])
    b = ValueFunction(values=[1.5, 0.0, 3.0])
    assert a.distance(b) == 2.0


def test_value_function_rejects_non_finite_entries():
    """Test that value vectors must be finite."""
    with pytest.raises(InvalidArgumentError):
        ValueFunction(values=[0.0, math.inf])


# --- ActionValueTable ---

def test_fresh_table_rows_are_sentinel_and_far_from_everything():
    """Test that unimproved rows report an infinite distance."""
    table = ActionValueTable.fresh(3, 2)
    table.set_row(1, [0.5, 0.25])

    distances = table.distances(ValueFunction(values=[0.0, 1.0, 0.0]))
    logger.info(distances)

    assert list(table.improved()) == [False, True, False]
    assert math.isinf(distances[0]) and math.isinf(distances[2])
    assert distances[1] == 0.5


def test_set_row_requires_a_full_finite_row():
    """Test that partial rows are rejected so rows stay atomic."""
    table = ActionValueTable.fresh(2, 2)
    with pytest.raises(InvalidArgumentError):
        table.set_row(0, [1.0])
    with pytest.raises(InvalidArgumentError):
        table.set_row(0, [1.0, math.inf])


# --- QueryLedger ---

def test_ledger_totals_and_rows():
    """Test that totals add every phase and rows list depths in order."""
    # Arrange
    ledger = QueryLedger()

    # Act
    ledger.charge_setup(10)
    ledger.charge_eval(4)
    ledger.charge_improve(3, 7)
    ledger.charge_improve(1, 2)
    ledger.charge_improve(3, 1)

    # Assert
    assert ledger.improve_queries == 10
    assert ledger.total == 24
    assert ledger.rows() == [("setup", 0, 10), ("eval", 0, 4), ("improve", 1, 2), ("improve", 3, 8)]


def test_ledger_rejects_negative_increments():
    """Test that counters never decrease."""
    with pytest.raises(InvalidArgumentError):
        QueryLedger().charge_eval(-1)


def test_ledger_snapshot_is_independent():
    """Test that a snapshot does not follow later charges."""
    ledger = QueryLedger()
    ledger.charge_improve(2, 5)
    snapshot = ledger.snapshot()
    ledger.charge_improve(2, 5)

    assert snapshot.improve_at(2) == 5
    assert ledger.improve_at(2) == 10


def test_ledger_merge_adds_every_counter():
    """Test merging two ledgers."""
    a, b = QueryLedger(), QueryLedger()
    a.charge_eval(1)
    b.charge_eval(2)
    b.charge_setup(3)
    b.charge_improve(4, 5)
    a.merge(b)
    assert (a.eval_queries, a.setup_queries, a.improve_at(4)) == (3, 3, 5)


# --- QuantileSchedule ---

def test_schedule_from_depths_fills_missing_depths_with_zero():
    """Test that unnamed depths up to the deepest one get theta 0."""
    schedule = QuantileSchedule.from_depths({2: 0.3, 4: 0.2, 8: 0.1})
    logger.info(schedule)

    assert schedule.max_depth == 8
    assert schedule.thetas == (1.0, 0.3, 0.0, 0.2, 0.0, 0.0, 0.0, 0.1)
    assert schedule.deepest_full_depth == 1


@pytest.mark.parametrize("thetas", [(), (0.5,), (1.0, 1.5), (1.0, -0.1)])
def test_schedule_rejects_invalid_budgets(thetas):
    """Test that theta_1 must be 1 and every budget must lie in [0, 1]."""
    with pytest.raises(InvalidArgumentError):
        QuantileSchedule(thetas=thetas)


def test_schedule_inflated_adds_slack_and_clips():
    """Test the order-preserving slack m / S."""
    schedule = QuantileSchedule(thetas=(1.0, 0.2, 0.95)).inflated(1, 10)
    assert schedule.thetas == pytest.approx((1.0, 0.3, 1.0))
    assert schedule.deepest_full_depth == 3


# --- ConvergenceTrace ---

def _record(iteration: int, distance: float, deep: float = 0.0) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        distance_to_opt=distance,
        policy_changes=0,
        states_improved_by_depth={},
        deep_fraction=deep,
        ledger=QueryLedger(),
        value=np.zeros(1),
    )


def test_trace_contraction_ratios_skip_zero_denominators():
    """Test empirical contraction ratios and kappa."""
    trace = ConvergenceTrace(max_depth=1)
    for i, (d, deep) in enumerate([(1.0, 0.1), (0.5, 0.4), (0.1, 0.0), (0.0, 0.0), (0.0, 0.0)]):
        trace.append(_record(i, d, deep))

    assert trace.contraction_ratios() == pytest.approx([0.5, 0.2, 0.0])
    assert trace.empirical_kappa == pytest.approx(0.5)
    assert trace.max_deep_fraction == 0.4
    assert trace.is_non_increasing()


def test_trace_ratio_series_has_one_entry_per_round():
    """Test NaN in round 0 and for zero denominators, ratios elsewhere."""
    trace = ConvergenceTrace(max_depth=1)
    for i, d in enumerate([1.0, 0.5, 0.0, 0.0]):
        trace.append(_record(i, d))

    ratios = trace.ratio_series()

    assert len(ratios) == 4
    assert math.isnan(ratios[0]) and math.isnan(ratios[3])
    assert ratios[1:3] == [0.5, 0.0]


def test_trace_detects_increasing_distance():
    """Test monotonicity check."""
    trace = ConvergenceTrace(max_depth=1)
    trace.append(_record(0, 0.5))
    trace.append(_record(1, 0.6))
    assert not trace.is_non_increasing()


# --- MazeConfig and AggregationMap ---

def test_maze_config_rejects_tiny_grid():
    """Test the minimum maze size."""
    with pytest.raises(InvalidArgumentError, match="at least 5x5"):
        MazeConfig(width=4, height=9)


def test_aggregation_map_requires_every_group():
    """Test that empty groups are rejected."""
    with pytest.raises(InvalidArgumentError):
        AggregationMap(group_of=(0, 0, 2), num_groups=3)


def test_aggregation_map_members():
    """Test grouping of states."""
    mapping = AggregationMap(group_of=(1, 0, 1), num_groups=2)
    assert mapping.members() == [[1], [0, 2]]
    assert AggregationMap.identity(3).group_of == (0, 1, 2)
