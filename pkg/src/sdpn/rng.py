"""Deterministic random number generation.

The package uses SplitMix64 as its only source of randomness.  It is a
well-known 64-bit generator (Steele, Lea & Flood; the seeding generator
of java.util.SplittableRandom) whose entire state is one 64-bit word,
which makes seeding, stream splitting, and cross-platform reproduction
trivial: all draws are pure integer arithmetic.

Uniform draws are returned as 53-bit integers so callers can compare
them against exact rational thresholds without any floating point.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """SplitMix64 stream starting from a 64-bit seed."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_u53(self) -> int:
        """Uniform integer in [0, 2**53); compare against Fraction(k, 2**53)."""
        return self.next_u64() >> 11

    def next_unit(self) -> float:
        return self.next_u53() / 9007199254740992.0  # 2**53

    def split(self, index: int) -> "SplitMix64":
        """Deterministic substream: substreams are independent of how work
        is partitioned, so parallel and sequential use give equal results."""
        return SplitMix64((self._state + (index + 1) * _GOLDEN) & _MASK64)


def gaussian_pair(rng: SplitMix64) -> tuple[float, float]:
    """One Box-Muller step: two independent standard-normal samples."""
    u1 = (rng.next_u53() + 1) / 9007199254740993.0  # in (0, 1]
    u2 = rng.next_unit()
    radius = math.sqrt(-2.0 * math.log(u1))
    angle = 2.0 * math.pi * u2
    return radius * math.cos(angle), radius * math.sin(angle)


class GaussianStream:
    """Standard-normal stream over SplitMix64 via Box-Muller."""

    def __init__(self, seed: int):
        self._rng = SplitMix64(seed)
        self._spare: float | None = None

    def next(self) -> float:
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        value, self._spare = gaussian_pair(self._rng)
        return value
