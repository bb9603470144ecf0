"""Seeded randomness with a portable, platform-independent stream.

A splitmix64 generator backs everything: the same 64-bit seed yields the
same stream on every platform, which keeps synthetic graphs, splits,
batch schedules, and weight initialization bitwise reproducible.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def mix_seed(seed: int, stream: int) -> int:
    """Derive a decorrelated sub-seed for a named stream (epoch, stage, ...)."""
    _, out = _splitmix64((seed ^ (stream * _GOLDEN)) & _MASK)
    return out


class Rng:
    """Deterministic 64-bit generator; identical seeds give identical streams."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state, out = _splitmix64(self._state)
        return out

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_in(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def randrange(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange requires n >= 1")
        threshold = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def uniform_array(self, n: int):
        """Vectorized batch of `uniform()` draws; same stream as the scalar path."""
        import numpy as np

        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        z = np.uint64(self._state) + steps
        self._state = (self._state + n * _GOLDEN) & _MASK
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def sample_without_replacement(rng: Rng, population: int, k: int) -> tuple[int, ...]:
    """Uniform k-subset of range(population), returned sorted.

    Partial Fisher-Yates: uniform over ordered k-permutations, hence
    uniform over the induced subsets.
    """
    if k < 0 or k > population:
        raise ValueError(f"cannot sample {k} items from population of {population}")
    pool = list(range(population))
    for i in range(k):
        j = i + rng.randrange(population - i)
        pool[i], pool[j] = pool[j], pool[i]
    return tuple(sorted(pool[:k]))
