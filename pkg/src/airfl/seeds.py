"""Derivation of independent, reproducible RNG streams from a single run seed.

Every stochastic component draws from its own stream keyed by a tuple of
integers (round index, device index, purpose tag, ...).  Streams derived from
the same (seed, key) are identical across runs and thread counts.
"""

from __future__ import annotations

import numpy as np

# purpose tags for substream keys
NOISE = 0
BATCH = 1
INIT = 2
SHUFFLE = 3
DATA = 4
EVAL = 5
PARTITION = 6


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a generator for the stream identified by ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.Philox(ss))
