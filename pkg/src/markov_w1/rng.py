"""Seeded counter-based random streams.

Every stochastic routine takes an integer seed and (optionally) a stream
path such as a replication index. Streams are derived with
``numpy.random.SeedSequence`` and drive a Philox generator, so stream
``(seed, 3)`` is the same on every machine and independent of how many
other streams were consumed before it.
"""
from __future__ import annotations

import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed`` and sub-stream ``stream`` (e.g. replication index)."""
    seed = check_seed(seed)
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(sequence))
