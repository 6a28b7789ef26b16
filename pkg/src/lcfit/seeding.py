"""Seed derivation: every random stream is a pure function of a key path.

Keys are hashed through ``numpy.random.SeedSequence`` so that, e.g., the
stream for replicate ``k`` of master seed ``s`` never depends on how work
is scheduled across workers.
"""

from __future__ import annotations

import numpy as np


def _entropy(seed) -> list[int]:
    if isinstance(seed, (tuple, list)):
        out: list[int] = []
        for part in seed:
            out.extend(_entropy(part))
        return out
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seeds must be nonnegative, got {seed}")
    return [seed]


def rng_for(seed) -> np.random.Generator:
    """Generator for an int seed or a nested tuple of ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed))))


def derive_seed(*keys) -> int:
    """A 63-bit integer seed determined by ``keys``."""
    return int(np.random.SeedSequence(_entropy(keys)).generate_state(2, np.uint64)[0] >> np.uint64(1))
