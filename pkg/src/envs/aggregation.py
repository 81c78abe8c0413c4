"""
k x k state aggregation of the maze and its use as an approximate V*.

Free cells are grouped by grid block; the aggregated MDP averages rewards and
group-summed transition probabilities uniformly over each group's members.
Solving the aggregate and lifting its value back gives a cheap stand-in for
V* that the threshold and quantile planners can be guided by.

Usage:
    mapping = grid_partition(config, k=3, layout=layout)
    small = aggregate_mdp(mdp, mapping)
    v_tilde, setup = approximate_optimal_value(mdp, layout, k=3)
"""

from typing import Dict, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from errors import InvalidArgumentError
from models import (
    AggregationMap,
    LookaheadBackend,
    MazeConfig,
    MazeLayout,
    Policy,
    TabularMdp,
    ValueFunction,
)
from envs.maze import generate_layout
from planner_engine import run_pi


def grid_partition(config: MazeConfig, k: int, layout: MazeLayout | None = None) -> AggregationMap:
    """
    Group free cells by (row // k, col // k) block.

    Groups are numbered in order of first appearance along the state order,
    so k = 1 gives the identity map. Walls belong to no group.

    Args:
        config: Maze configuration.
        k: Block side, 1 <= k <= max(width, height).
        layout: Already generated layout of config; generated when omitted.

    Returns:
        AggregationMap over the maze states.
    """
    if not 1 <= k <= max(config.width, config.height):
        raise InvalidArgumentError(
            f"Block side must lie in [1, {max(config.width, config.height)}], got {k}"
        )
    layout = layout or generate_layout(config)
    block_index: Dict[Tuple[int, int], int] = {}
    group_of = []
    for r, c in layout.cells:
        block = (r // k, c // k)
        if block not in block_index:
            block_index[block] = len(block_index)
        group_of.append(block_index[block])
    return AggregationMap(group_of=tuple(group_of), num_groups=len(block_index))


def _membership(mapping: AggregationMap) -> sparse.csr_matrix:
    S = len(mapping.group_of)
    return sparse.csr_matrix(
        (np.ones(S), (np.arange(S), mapping.group_of)), shape=(S, mapping.num_groups)
    )


def aggregate_mdp(mdp: TabularMdp, mapping: AggregationMap) -> TabularMdp:
    """
    Uniform-weight aggregation.

    P_hat(G'|G, a) = mean_{s in G} sum_{s' in G'} P(s'|s, a) and
    r_hat(G, a) = mean_{s in G} r(s, a).

    Raises:
        InvalidArgumentError: If the map does not cover the MDP's states.
    """
    S, A, G = mdp.num_states, mdp.num_actions, mapping.num_groups
    if len(mapping.group_of) != S:
        raise InvalidArgumentError(
            f"Aggregation map covers {len(mapping.group_of)} states, MDP has {S}"
        )
    membership = _membership(mapping)
    sizes = np.asarray(membership.sum(axis=0)).ravel()
    averaging = (membership.T.multiply(1.0 / sizes[:, None])).tocsr()

    into_groups = (mdp.transition_matrix @ membership).toarray().reshape(S, A, G)
    transitions = np.einsum("gs,sah->gah", averaging.toarray(), into_groups)
    rewards = averaging @ mdp.reward_matrix
    return TabularMdp.from_arrays(transitions, rewards, mdp.discount)


def lift_value(v_agg: ValueFunction, mapping: AggregationMap) -> ValueFunction:
    """V_tilde(s) = v_agg(group_of(s))."""
    if len(v_agg) != mapping.num_groups:
        raise InvalidArgumentError(
            f"Aggregated value has {len(v_agg)} entries, map has {mapping.num_groups} groups"
        )
    return ValueFunction(values=v_agg.values[np.asarray(mapping.lift)])


def _distance_ranks(reference: ValueFunction, v_pi: ValueFunction) -> np.ndarray:
    distances = np.abs(reference.values - v_pi.values)
    order = np.lexsort((np.arange(len(distances)), -distances))
    ranks = np.empty(len(distances), dtype=np.int64)
    ranks[order] = np.arange(len(distances))
    return ranks


def order_preservation_m(v_star: ValueFunction, v_tilde: ValueFunction, v_pi: ValueFunction) -> int:
    """
    Smallest m for which v_tilde is m-order-preserving at v_pi.

    States are ranked by descending |V*(s) - V^pi(s)| and by descending
    |V_tilde(s) - V^pi(s)|, ties by state index; m is the largest rank
    displacement.
    """
    if not len(v_star) == len(v_tilde) == len(v_pi):
        raise InvalidArgumentError("Value vectors must have equal lengths")
    return int(np.max(np.abs(_distance_ranks(v_star, v_pi) - _distance_ranks(v_tilde, v_pi))))


def approximate_optimal_value(
    mdp: TabularMdp,
    layout: MazeLayout,
    k: int,
    backend: LookaheadBackend = LookaheadBackend.TREE,
) -> Tuple[ValueFunction, int]:
    """
    Approximate V* by solving the k x k aggregate with PI and lifting the result.

    Args:
        mdp: The maze MDP built from layout.
        layout: Its layout.
        k: Block side.
        backend: Lookahead backend of the aggregate PI run.

    Returns:
        (v_tilde, setup_queries) where setup_queries is S * A fetches to build
        the aggregate plus every query of the aggregate PI run.
    """
    mapping = grid_partition(layout.config, k, layout)
    small = aggregate_mdp(mdp, mapping)
    result = run_pi(small, Policy.constant(small.num_states, 0), backend, label=f"aggregate(k={k})")
    setup_queries = mdp.num_states * mdp.num_actions + result.total_queries
    logger.info(
        f"Aggregated maze with k={k}: {mapping.num_groups} groups, {setup_queries} setup queries"
    )
    return lift_value(result.value, mapping), setup_queries
