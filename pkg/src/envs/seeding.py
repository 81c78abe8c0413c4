"""
Counter-based random streams.

Every random draw in the package comes from a generator keyed by a root seed
plus named integer substreams, so a sweep cell or a maze retry sees the same
numbers regardless of execution order.
"""

import numpy as np

from errors import InvalidArgumentError


def seeded_generator(seed: int, *streams: int) -> np.random.Generator:
    """Philox generator for (seed, *streams); negative keys are rejected."""
    if seed < 0 or any(s < 0 for s in streams):
        raise InvalidArgumentError(f"Seeds must be non-negative, got {(seed, *streams)}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *streams])))
