"""Portable deterministic random number generation.

Everything downstream (embodiment sampling, scene generation, dataset
episode seeding) draws from SplitMix64 so that identical seeds produce
bit-identical outputs on every platform and Python version.  The
generator is fully specified by its 64-bit integer arithmetic; no
platform RNG is involved.

Reference outputs (seed -> first next_u64), useful when porting:

    seed 0                    -> 0xE220A8397B1DCDAF
    seed 1                    -> 0x910A2DEC89025CC1
    seed 0x123456789ABCDEF0   -> 0x161922C645CE50E8
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a high-quality 64-bit bijective mix."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def split_seed(seed: int, index: int, stream: int = 0) -> int:
    """Derive an independent child seed from (seed, index, stream).

    Used to give every dataset episode / scene / embodiment its own seed
    so results do not depend on worker count or evaluation order.
    """
    return mix64(mix64(seed & _MASK64) ^ mix64((index & _MASK64) + stream * _GOLDEN))


class SplitMix64:
    """Minimal deterministic uniform generator over a single 64-bit state."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        x = self._state
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
        return x ^ (x >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive, via rejection-free modulo
        over a 64-bit draw (bias < 2**-50 for any practical range)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        return lo + self.next_u64() % span

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(0, i)
            seq[i], seq[j] = seq[j], seq[i]
