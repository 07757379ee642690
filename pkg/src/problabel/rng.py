"""Deterministic pseudo-random streams.

Every random draw in this package flows from an explicit 64-bit seed through
the generators defined here, so that two runs with equal seeds produce
bit-identical results. The generator is intentionally tiny and fully
specified by its update equations (all arithmetic mod 2**64):

seed scrambling (splitmix64 finalizer)::

    z = (x + 0x9E3779B97F4A7C15)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

stream update (xorshift64*)::

    s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27
    output = s * 0x2545F4914F6CDD1D

Derived quantities:

* uniform double in [0, 1): top 53 bits of the output, ``(u >> 11) * 2**-53``
* unit normal: Box-Muller on two uniforms (first mapped into (0, 1]),
  ``sqrt(-2 ln u1) * (cos, sin)(2 pi u2)``, pair cached
* bounded integer in [0, n): ``output % n``
* shuffle: Fisher-Yates from the top index down

Sub-streams are derived by folding integer or string tags into the parent
seed with the splitmix64 finalizer (strings hash via FNV-1a 64 first), so a
sub-seed is a pure function of the parent seed and its tags.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer; scrambles a 64-bit value."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of a UTF-8 string."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(seed: int, *tags: int | str) -> int:
    """Derive a sub-seed from ``seed`` and a sequence of integer/string tags.

    Pure function: the result depends only on the arguments, so independent
    sub-streams (per repetition, per strategy, ...) can be reproduced in any
    order, serially or in parallel.
    """
    h = mix64(seed & _MASK)
    for tag in tags:
        value = fnv1a64(tag) if isinstance(tag, str) else tag & _MASK
        h = mix64(h ^ value)
    return h


class Prng:
    """xorshift64* generator seeded through the splitmix64 finalizer."""

    def __init__(self, seed: int) -> None:
        state = mix64(seed & _MASK)
        # xorshift state must be nonzero
        self._state = state if state != 0 else _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        """Array of ``n`` uniform doubles in [0, 1)."""
        out = np.empty(n)
        for i in range(n):
            out[i] = (self.next_u64() >> 11) * 2.0**-53
        return out

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, pair cached)."""
        spare = getattr(self, "_spare", None)
        if spare is not None:
            self._spare = None
            return spare
        # u1 in (0, 1] so the log never sees zero
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        """Array of ``n`` standard normal draws."""
        out = np.empty(n)
        for i in range(n):
            out[i] = self.normal()
        return out

    def randint(self, bound: int) -> int:
        """Integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        """Shuffled list of range(n)."""
        items = list(range(n))
        self.shuffle(items)
        return items
