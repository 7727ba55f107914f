"""Counter-based per-trial seeds.

``trial_seed(master, i) = splitmix64(master ^ i)``. The SplitMix64 finalizer
decorrelates neighbouring counters, so trials get independent streams and
any trial can be regenerated on its own.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def trial_seed(master: int, index: int) -> int:
    return splitmix64((int(master) & _MASK) ^ int(index))


def trial_rng(master: int, index: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(master, index))
