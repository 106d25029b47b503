"""Portable seeded random stream (xoshiro256** seeded through splitmix64).

Pure integer arithmetic, so a seed produces the same samples on every
platform and numpy version.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state):
    """Return ``(next_state, output)`` of one splitmix64 step."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256** generator.

    >>> Rng(1).next_u64() == Rng(1).next_u64()
    True
    """

    def __init__(self, seed=0):
        self.seed = int(seed) & _MASK
        sm = self.seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self, size=None):
        """Uniform doubles in ``[0, 1)`` with 53 random bits each."""
        if size is None:
            return (self.next_u64() >> 11) * (1.0 / (1 << 53))
        n = int(np.prod(size))
        nxt = self.next_u64
        bits = np.fromiter((nxt() >> 11 for _ in range(n)), dtype=np.float64, count=n)
        return (bits * (1.0 / (1 << 53))).reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self.random(size)

    def integers(self, low, high):
        """Single integer in ``[low, high)``."""
        span = high - low
        if span <= 0:
            raise ValueError(f"empty range [{low}, {high})")
        return low + int(self.random() * span)

    def spawn(self):
        """Independent child stream seeded from this one."""
        return Rng(self.next_u64())
