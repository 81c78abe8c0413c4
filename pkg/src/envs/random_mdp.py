"""
Garnet-style random MDPs: each (state, action) pair reaches `branching`
distinct successors with Dirichlet-distributed probabilities, and rewards are
drawn uniformly from a fixed range.
"""

import numpy as np

from envs.seeding import seeded_generator
from errors import InvalidArgumentError
from models import TabularMdp


RANDOM_MDP_STREAM = 1


def build_random_mdp(
    num_states: int,
    num_actions: int,
    seed: int,
    gamma: float = 0.9,
    branching: int | None = None,
    reward_range: tuple[float, float] = (0.0, 1.0),
) -> TabularMdp:
    """
    Build a seeded random MDP.

    Args:
        num_states: S.
        num_actions: A.
        seed: Root seed; the same seed always yields the same MDP.
        gamma: Discount in (0, 1).
        branching: Successors per (state, action); defaults to min(S, 3).
        reward_range: (low, high) of the uniform reward draw.

    Returns:
        TabularMdp.

    Raises:
        InvalidArgumentError: If branching is outside [1, S] or the reward range is empty.
    """
    if num_states < 1 or num_actions < 1:
        raise InvalidArgumentError(f"Need S >= 1 and A >= 1, got S={num_states}, A={num_actions}")
    branching = min(num_states, 3) if branching is None else branching
    if not 1 <= branching <= num_states:
        raise InvalidArgumentError(f"Branching must lie in [1, {num_states}], got {branching}")
    low, high = reward_range
    if high < low:
        raise InvalidArgumentError(f"Empty reward range {reward_range}")

    rng = seeded_generator(seed, RANDOM_MDP_STREAM)
    transitions = []
    for _ in range(num_states):
        per_state = []
        for _ in range(num_actions):
            successors = np.sort(rng.choice(num_states, size=branching, replace=False))
            probabilities = rng.dirichlet(np.ones(branching))
            # renormalize so the row sums to 1 within the MDP tolerance
            probabilities = probabilities / probabilities.sum()
            per_state.append(list(zip(successors.tolist(), probabilities.tolist())))
        transitions.append(per_state)
    rewards = rng.uniform(low, high, size=(num_states, num_actions))

    return TabularMdp(
        num_states=num_states,
        num_actions=num_actions,
        transitions=transitions,
        rewards=rewards.tolist(),
        discount=gamma,
    )
