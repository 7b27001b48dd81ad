"""Seed derivation helpers.

Every random stream in the simulator is derived from the experiment seed
plus a purpose tag (and optional indices such as round or client id) via
``numpy.random.SeedSequence``. Streams are therefore independent of each
other and of execution order, which is what makes parallel client training
and parallel sweep cells bit-reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags. Values are arbitrary but frozen: changing them changes
# every derived stream and breaks reproducibility of stored results.
TAG_CENTROID = 101
TAG_BLOB = 102
TAG_PARTITION = 103
TAG_HOLDOUT = 104
TAG_INIT = 105
TAG_SAMPLE = 106
TAG_TRAIN = 107
TAG_EPOCH = 108
TAG_EVAL = 109


def _normalize(parts: tuple[int, ...]) -> list[int]:
    # SeedSequence entropy must be non-negative; fold negatives through
    # their 64-bit two's complement so any Python int is accepted.
    return [int(p) & _MASK64 for p in parts]


def rng_for(*parts: int) -> np.random.Generator:
    """Deterministic generator for the given (seed, tag, *indices) tuple."""
    return np.random.default_rng(np.random.SeedSequence(_normalize(parts)))


def int_seed(*parts: int) -> int:
    """Collapse a (seed, tag, *indices) tuple into a plain 64-bit seed.

    Used where an operation's signature takes a single integer seed.
    """
    state = np.random.SeedSequence(_normalize(parts)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])
