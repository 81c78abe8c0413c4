"""
Tests for the lookahead system.

Tests h-step action values of both backends, the tree cost model, the
ledger charges of each backend, reset pairs and the monotonicity and
contraction of deeper lookahead.
"""
import numpy as np
import pytest
from loguru import logger

from errors import InvalidArgumentError
from models import ActionValueTable, LookaheadBackend, Policy, QueryLedger, TabularMdp, ValueFunction
from systems.bellman import evaluate_policy, exact_optimal
from systems.lookahead import (
    LookaheadSweep,
    TreeCostModel,
    improve_states,
    optimality_layers,
    q_h_state,
    tree_query_cost,
)


def _deterministic_tree(num_actions: int = 4) -> TabularMdp:
    # state 0 branches to states 1..A, every other state loops to itself
    S = num_actions + 1
    transitions = [[[(a + 1, 1.0)] for a in range(num_actions)]]
    transitions += [[[(s, 1.0)] for _ in range(num_actions)] for s in range(1, S)]
    return TabularMdp(
        num_states=S,
        num_actions=num_actions,
        transitions=transitions,
        rewards=[[0.0] * num_actions for _ in range(S)],
        discount=0.9,
    )


def test_chain_two_step_lookahead_by_hand(make_chain):
    """Test Q_2(s_{n-1}, u) = gamma (1 - gamma) and Q_2(s_{n-1}, d) = 0 from v = 0."""
    n, gamma = 5, 0.9
    mdp = make_chain(n, gamma)
    v = ValueFunction(values=np.zeros(n + 2))

    for backend in LookaheadBackend:
        q = q_h_state(mdp, v, 2, n - 1, backend, QueryLedger())
        logger.info(f"{backend.value}: {q}")
        assert q[0] == pytest.approx(gamma * (1.0 - gamma), abs=1e-15)
        assert q[1] == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_tree_and_dp_backends_agree(make_random_mdp, seed):
    """Test that both backends produce the same action values on stochastic MDPs."""
    # Arrange
    mdp = make_random_mdp(num_states=6, num_actions=3, seed=seed)
    rng = np.random.default_rng(100 + seed)
    v = ValueFunction(values=rng.uniform(-1.0, 1.0, size=6))

    for h in range(1, 5):
        for s in range(6):
            # Act
            tree = q_h_state(mdp, v, h, s, LookaheadBackend.TREE, QueryLedger())
            dp = q_h_state(mdp, v, h, s, LookaheadBackend.DP, QueryLedger())

            # Assert
            np.testing.assert_allclose(tree, dp, rtol=0.0, atol=1e-12)


def test_depth_one_equals_one_step_backup(make_random_mdp):
    """Test that Q_1 is the ordinary Bellman backup."""
    mdp = make_random_mdp(num_states=5, num_actions=2, seed=3)
    v = ValueFunction(values=np.arange(5, dtype=float))
    q = q_h_state(mdp, v, 1, 2, LookaheadBackend.TREE, QueryLedger())
    expected = [
        mdp.rewards[2][a] + mdp.discount * sum(p * v.values[s2] for s2, p in mdp.successors(2, a))
        for a in range(2)
    ]
    np.testing.assert_allclose(q, expected, atol=1e-12)


def test_tree_cost_of_four_ary_tree():
    """Test 4 expansions at depth 1 and 4 + 16 at depth 2."""
    mdp = _deterministic_tree(4)
    assert tree_query_cost(mdp, 0, 1) == 4
    assert tree_query_cost(mdp, 0, 2) == 20


def test_tree_cost_on_chain_doubles_per_level(make_chain):
    """Test c(h) = sum_{i=1..h} 2^i on the chain, where every action has one successor."""
    mdp = make_chain(6)
    model = TreeCostModel(mdp)
    for h in range(1, 6):
        assert model.cost(3, h) == 2 ** (h + 1) - 2
    assert model.max_cost(3) == 14


def test_tree_cost_counts_every_stochastic_branch(make_random_mdp):
    """Test that a branching-2 MDP with A = 2 costs 2 + 2 * 2 * 2 at depth 2."""
    mdp = make_random_mdp(num_states=4, num_actions=2, seed=1, branching=2)
    assert tree_query_cost(mdp, 0, 2) == 2 * (1 + 2 * 2)


def test_tree_backend_charges_counted_expansions(make_random_mdp):
    """Test that expansions counted during the search agree with the separate cost model."""
    mdp = make_random_mdp(num_states=6, num_actions=3, seed=5)
    ledger = QueryLedger()

    q_h_state(mdp, ValueFunction(values=np.zeros(6)), 3, 4, LookaheadBackend.TREE, ledger)

    assert ledger.improve_at(3) == tree_query_cost(mdp, 4, 3)
    assert ledger.eval_queries == 0


def test_dp_backend_charges_one_layer_per_extra_depth(make_random_mdp):
    """Test that DP charges S evaluation queries per computed layer and no improvement queries."""
    mdp = make_random_mdp(num_states=6, num_actions=3, seed=5)
    ledger = QueryLedger()
    sweep = LookaheadSweep(mdp, ValueFunction(values=np.zeros(6)), LookaheadBackend.DP, ledger)

    sweep.q_values(0, 3)
    sweep.q_values(1, 3)  # layers are shared within a sweep
    sweep.q_values(2, 1)

    assert ledger.eval_queries == 2 * 6
    assert ledger.improve_queries == 0


def test_improve_states_only_touches_listed_rows(make_chain):
    """Test that rows outside the state set stay at the sentinel."""
    mdp = make_chain(4)
    u = ActionValueTable.fresh(6, 2)
    ledger = QueryLedger()

    improve_states(mdp, ValueFunction(values=np.zeros(6)), {4, 1}, 2, LookaheadBackend.TREE, ledger, u)

    assert list(u.improved()) == [False, True, False, False, True, False]
    assert ledger.improve_at(2) == 2 * 6


def test_optimality_layers_apply_t_repeatedly(make_chain):
    """Test T^3[0] on the chain reaches three states back from s_n."""
    mdp = make_chain(5, 0.5)
    layered = optimality_layers(mdp, ValueFunction(values=np.zeros(7)), 3)
    logger.info(layered.values)
    assert np.count_nonzero(layered.values) == 3
    assert optimality_layers(mdp, layered, 0) is layered


@pytest.mark.parametrize("h, s", [(0, 0), (1, 99), (1, -1)])
def test_lookahead_rejects_bad_depth_or_state(make_chain, h, s):
    """Test the h >= 1 and state-range preconditions."""
    mdp = make_chain(3)
    with pytest.raises(InvalidArgumentError):
        q_h_state(mdp, ValueFunction(values=np.zeros(5)), h, s, LookaheadBackend.TREE, QueryLedger())


def test_sweep_rejects_wrong_length_value(make_chain):
    """Test the dimension precondition of the sweep."""
    with pytest.raises(InvalidArgumentError):
        LookaheadSweep(make_chain(3), ValueFunction(values=[0.0]), LookaheadBackend.DP, QueryLedger())


def test_tree_ledger_counts_a_hand_built_tree():
    """Test 4 + 16 charged expansions at depth 2 without consulting the cost model."""
    mdp = _deterministic_tree(4)
    ledger = QueryLedger()

    q_h_state(mdp, ValueFunction(values=np.zeros(5)), 2, 0, LookaheadBackend.TREE, ledger)

    assert ledger.improve_at(2) == 20


def test_memoized_subtrees_are_still_charged_in_full():
    """Test that a second root sharing cached nodes pays for its whole tree."""
    mdp = _deterministic_tree(2)
    ledger = QueryLedger()
    sweep = LookaheadSweep(mdp, ValueFunction(values=np.zeros(3)), LookaheadBackend.TREE, ledger)

    sweep.q_values(1, 3)
    sweep.q_values(1, 3)

    # 2 + 4 + 8 expansions per root
    assert ledger.improve_at(3) == 2 * 14


# --- Reset pairs ---

class TestResetPairs:
    """Test suite for lookahead through the maze's goal-respawn rows."""

    @pytest.fixture(autouse=True)
    def _setup(self, make_maze):
        """Set up the small maze and its first goal state."""
        self.mdp, layout = make_maze(seed=0)
        self.goal = layout.state_of_cell[layout.goals[0]]

    def test_goal_actions_are_reset_pairs(self):
        """Test that every action of a goal restarts and nothing else does."""
        goal_pairs = {(self.goal, a) for a in range(self.mdp.num_actions)}
        assert goal_pairs <= self.mdp.reset_pairs
        # two goals, four actions each
        assert len(self.mdp.reset_pairs) == 2 * 4

    def test_reset_pair_costs_one_expansion(self):
        """Test c(goal, h) = A for every depth."""
        model = TreeCostModel(self.mdp)
        for h in range(1, 8):
            assert model.cost(self.goal, h) == self.mdp.num_actions

    def test_reset_continuation_is_charged_as_layers(self):
        """Test A improvement queries and S evaluation queries per shared layer below the root."""
        ledger = QueryLedger()

        q_h_state(self.mdp, ValueFunction(values=np.zeros(40)), 3, self.goal, LookaheadBackend.TREE, ledger)

        assert ledger.improve_at(3) == 4
        assert ledger.eval_queries == 2 * 40

    def test_backends_agree_on_the_maze(self):
        """Test tree and DP values at every state and depth up to 4."""
        rng = np.random.default_rng(11)
        v = ValueFunction(values=rng.uniform(-1.0, 1.0, size=40))
        tree = LookaheadSweep(self.mdp, v, LookaheadBackend.TREE, QueryLedger())
        dp = LookaheadSweep(self.mdp, v, LookaheadBackend.DP, QueryLedger())

        for h in range(1, 5):
            for s in range(40):
                np.testing.assert_allclose(tree.q_values(s, h), dp.q_values(s, h), rtol=0.0, atol=1e-12)

    def test_ledger_matches_cost_model_on_the_maze(self):
        """Test counted expansions against the cost model with reset pairs in the tree."""
        for h in (2, 5):
            ledger = QueryLedger()
            sweep = LookaheadSweep(self.mdp, ValueFunction(values=np.zeros(40)), LookaheadBackend.TREE, ledger)
            for s in range(40):
                sweep.q_values(s, h)
            expected = sum(TreeCostModel(self.mdp).cost(s, h) for s in range(40))
            assert ledger.improve_at(h) == expected


# --- Lookahead properties ---

def test_backend_oracle_on_many_random_cases(make_random_mdp):
    """Test tree against DP on 500 (MDP, V, h <= 4, s) cases with S <= 50."""
    cases = 0
    for seed in range(50):
        # Arrange
        S, A = 5 + seed % 46, 2 + seed % 3
        mdp = make_random_mdp(num_states=S, num_actions=A, seed=seed)
        rng = np.random.default_rng(1000 + seed)
        v = ValueFunction(values=rng.uniform(-5.0, 5.0, size=S))
        tree = LookaheadSweep(mdp, v, LookaheadBackend.TREE, QueryLedger())
        dp = LookaheadSweep(mdp, v, LookaheadBackend.DP, QueryLedger())

        for _ in range(10):
            h, s = int(rng.integers(1, 5)), int(rng.integers(0, S))

            # Act / Assert
            np.testing.assert_allclose(tree.q_values(s, h), dp.q_values(s, h), rtol=0.0, atol=1e-12)
            cases += 1

    assert cases == 500


@pytest.mark.parametrize("seed", range(5))
def test_deeper_lookahead_dominates_one_step(make_random_mdp, seed):
    """Test max_a Q_h(s, a) >= max_a Q_1(s, a) at V^pi."""
    mdp = make_random_mdp(num_states=12, num_actions=3, seed=seed)
    v_pi = evaluate_policy(mdp, Policy.constant(12, seed % 3))
    sweep = LookaheadSweep(mdp, v_pi, LookaheadBackend.DP, QueryLedger())

    for s in range(12):
        one_step = sweep.q_values(s, 1).max()
        for h in range(2, 6):
            assert sweep.q_values(s, h).max() >= one_step - 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_optimality_layers_contract_by_gamma_power(make_random_mdp, seed):
    """Test ||T^h v - V*|| <= gamma^h ||v - V*||."""
    mdp = make_random_mdp(num_states=15, num_actions=3, seed=seed)
    v_star, _ = exact_optimal(mdp)
    rng = np.random.default_rng(seed)
    v = ValueFunction(values=rng.uniform(-10.0, 10.0, size=15))

    for h in range(1, 6):
        layered = optimality_layers(mdp, v, h)
        assert v_star.distance(layered) <= mdp.discount ** h * v_star.distance(v) + 1e-10
