"""
Environment builders for adaptive-lookahead policy iteration.

Available environments:
    - chain: n-state chain with a sink and a reward at the far end
    - maze: seeded four-room grid maze with goals and traps
    - random_mdp: Garnet-style random MDPs
    - aggregation: k x k maze aggregation and the approximate V* built from it
"""

from envs.aggregation import (
    aggregate_mdp,
    approximate_optimal_value,
    grid_partition,
    lift_value,
    order_preservation_m,
)
from envs.chain import build_chain, chain_down_policy, chain_optimal_value
from envs.maze import build_maze, generate_layout, render_layout
from envs.random_mdp import build_random_mdp
from envs.seeding import seeded_generator

__all__ = [
    "aggregate_mdp",
    "approximate_optimal_value",
    "build_chain",
    "build_maze",
    "build_random_mdp",
    "chain_down_policy",
    "chain_optimal_value",
    "generate_layout",
    "grid_partition",
    "lift_value",
    "order_preservation_m",
    "render_layout",
    "seeded_generator",
]
