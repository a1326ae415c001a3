"""Deterministic counter-based PRNG (splitmix64).

Every random draw in the package flows through this module so that runs
are bit-reproducible from a single integer seed, independent of Python's
hash randomization and of global library state. The generator is
counter-based: output i is a pure function of (seed, i), which also makes
array-sized draws cheap to vectorize.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One splitmix64 finalizer step on a 64-bit integer."""
    x &= _MASK
    x = (x ^ (x >> 30)) * _MIX1 & _MASK
    x = (x ^ (x >> 27)) * _MIX2 & _MASK
    return x ^ (x >> 31)


def _mix_array(states: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = states
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def derive_seed(master: int, *keys) -> int:
    """Stable sub-seed from a master seed and a key path.

    Keys may be ints or strings; strings are folded bytewise. Used for
    per-sample seeds, per-cycle shuffles, and parameter init streams.
    """
    h = splitmix64(master + _GOLDEN)
    for k in keys:
        if isinstance(k, str):
            for b in k.encode("utf-8"):
                h = splitmix64(h ^ b)
        else:
            h = splitmix64(h ^ (int(k) & _MASK))
    return h


class Rng:
    """Seeded stream of uniform doubles and integers."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._i = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._i + 1, self._i + n + 1, dtype=np.uint64)
        self._i += n
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        return _mix_array(states)

    def next_u64(self) -> int:
        return int(self._raw(1)[0])

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        """Uniform floats in [lo, hi); scalar when size is None."""
        n = 1 if size is None else int(np.prod(size))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        out = lo + (hi - lo) * u
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        return items[self.randint(len(items))]
