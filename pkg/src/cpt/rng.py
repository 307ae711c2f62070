"""Pinned 64-bit generator so sampled splits and synthetic data are
reproducible across processes, platforms and reimplementations.

Algorithm (all arithmetic mod 2^64):

    state(seed, stream) = (seed + (stream + 1) * 0x9E3779B97F4A7C15) mod 2^64
    next():
        state = state + 0x9E3779B97F4A7C15
        z = state
        z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z XOR (z >> 27)) * 0x94D049BB133111EB
        return z XOR (z >> 31)

Bounded draws use plain modulo: randrange(n) = next() mod n. Sampling without
replacement is a partial Fisher-Yates over the (sorted) pool: draw j =
randrange(remaining), swap pool[i + j] into position i, emit it.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int, stream: int = 0):
        self.state = (seed + (stream + 1) * _GAMMA) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        if n < 1:
            raise ValueError(f"randrange needs n >= 1, got {n}")
        return self.next_u64() % n

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * (self.next_u64() / 2**64)

    def draw(self, pool: list, k: int) -> list:
        """Remove and return k items chosen without replacement (in draw
        order). Mutates `pool` via partial Fisher-Yates."""
        if k > len(pool):
            raise ValueError(f"cannot draw {k} from pool of {len(pool)}")
        out = []
        for i in range(k):
            j = i + self.randrange(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
            out.append(pool[i])
        del pool[:k]
        return out
