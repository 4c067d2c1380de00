"""Seeded random number generation.

All stochastic code paths draw from Philox (counter-based) generators built
here, so any run is reproducible from integer seeds alone and per-user
streams are independent of iteration order.
"""

import numpy as np


def make_rng(seed: int, *streams: int) -> np.random.Generator:
    """Generator keyed by a seed plus optional sub-stream ids."""
    return np.random.Generator(np.random.Philox(key=_key(seed, *streams)))


def _key(seed: int, *streams: int) -> int:
    key = int(seed) & 0xFFFFFFFFFFFFFFFF
    for s in streams:
        # splitmix-style fold so (seed, a, b) and (seed, b, a) differ
        key = (key * 0x9E3779B97F4A7C15 + int(s) + 1) & 0xFFFFFFFFFFFFFFFF
    return key
