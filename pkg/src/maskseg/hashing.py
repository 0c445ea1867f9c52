"""Deterministic counter-based hashing for reproducible pseudo-randomness.

splitmix64 is used wherever a reproducible, language-independent stream is
needed (long-range edge subsampling, per-voxel noise fields).  All arithmetic
is modulo 2**64, so results are identical across platforms.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

def splitmix64(x: np.ndarray | int) -> np.ndarray | np.uint64:
    """Finalizer of the splitmix64 generator, applied elementwise."""
    # uint64 wrap-around is intentional; silence overflow warnings locally
    with np.errstate(over="ignore"):
        z = np.uint64(x) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def hash_key(seed: int, *components: int) -> np.uint64:
    """Fold integer components into a single 64-bit state."""
    h = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    for c in components:
        h = splitmix64(h ^ np.uint64(int(c) & 0xFFFFFFFFFFFFFFFF))
    return h


def hash_uniform(state: np.uint64, counters: np.ndarray) -> np.ndarray:
    """Uniform(0, 1) floats from a state and an array of uint64 counters.

    Equivalent to reading the splitmix64 stream at the given counter
    positions; never returns exactly 0.0 or 1.0.
    """
    with np.errstate(over="ignore"):
        h = splitmix64(state + counters.astype(np.uint64) * _GOLDEN)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / 9007199254740992.0
