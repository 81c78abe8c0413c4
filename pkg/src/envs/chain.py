"""
Chain MDP with a single rewarding state at its far end.

States s_0..s_n form the chain and s_{n+1} is an absorbing sink. Action u
(index 0) advances along the chain, action d (index 1) drops into the sink.
s_n loops to itself under u and collects 1 - gamma per step, so V*(s_i) = gamma^(n-i).
Starting from the all-d policy, 1-step improvement only discovers one more
state per round.

Usage:
    mdp = build_chain(20, gamma=0.9)
    pi0 = chain_down_policy(20)
"""

import numpy as np

from errors import InvalidArgumentError
from models import Policy, TabularMdp, ValueFunction


UP = 0
DOWN = 1


def _check_length(n: int) -> None:
    if n < 1:
        raise InvalidArgumentError(f"Chain needs n >= 1, got {n}")


def build_chain(n: int, gamma: float) -> TabularMdp:
    """
    Build the chain with n + 2 states and actions (u, d).

    Args:
        n: Index of the rewarding state; the chain has states s_0..s_n plus a sink.
        gamma: Discount in (0, 1).

    Returns:
        TabularMdp with S = n + 2, A = 2.

    Raises:
        InvalidArgumentError: If n < 1 or gamma is outside (0, 1).
    """
    _check_length(n)
    sink = n + 1
    transitions = []
    rewards = []
    for i in range(n + 1):
        up_target = i + 1 if i < n else n
        transitions.append([[(up_target, 1.0)], [(sink, 1.0)]])
        rewards.append([1.0 - gamma if i == n else 0.0, 0.0])
    transitions.append([[(sink, 1.0)], [(sink, 1.0)]])
    rewards.append([0.0, 0.0])
    return TabularMdp(
        num_states=n + 2,
        num_actions=2,
        transitions=transitions,
        rewards=rewards,
        discount=gamma,
    )


def chain_optimal_value(n: int, gamma: float) -> ValueFunction:
    """Closed form V*(s_i) = gamma^(n - i), V*(sink) = 0."""
    _check_length(n)
    values = np.append(gamma ** (n - np.arange(n + 1, dtype=float)), 0.0)
    return ValueFunction(values=values)


def chain_down_policy(n: int) -> Policy:
    """The all-d starting policy."""
    _check_length(n)
    return Policy.constant(n + 2, DOWN)
