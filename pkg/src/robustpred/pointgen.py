"""Deterministic point-set generation for demos and benchmarks.

Generation and shuffling run on splitmix64, a 64-bit-state generator simple
enough to specify exactly, so identical seeds produce identical point
streams on every platform.  Uniform coordinates are ``k * 2**-53`` with k a
53-bit integer; grid coordinates are integer multiples of a power-of-two
spacing and therefore exact, which maximizes true-zero degeneracies.
"""

from __future__ import annotations

import math
from typing import List, Tuple

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64: state advances by the golden-gamma constant, outputs are
    the finalized mix of the state (Steele, Lea & Flood's generator)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1): a 53-bit integer times 2**-53."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randrange(self, n: int) -> int:
        # rejection sampling keeps the distribution exactly uniform
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """Fisher-Yates, in place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


Point = Tuple[float, float]


def uniform_points(n: int, seed: int, scale: float = 1.0) -> List[Point]:
    """n points with coordinates uniform in [0, scale)."""
    rng = SplitMix64(seed)
    return [(rng.random() * scale, rng.random() * scale) for _ in range(n)]


def grid_points(side: int, spacing: float = 1.0, seed: int = 0) -> List[Point]:
    """The full side x side integer lattice scaled by ``spacing``, shuffled.

    ``spacing`` must be a power of two so every coordinate is exact.
    """
    m, e = math.frexp(spacing)
    if m != 0.5 or not math.isfinite(spacing) or spacing <= 0:
        raise ValueError(f"grid spacing must be a positive power of two, got {spacing!r}")
    pts = [(i * spacing, j * spacing) for i in range(side) for j in range(side)]
    SplitMix64(seed).shuffle(pts)
    return pts
