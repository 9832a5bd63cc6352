"""Deterministic random streams built on the splitmix64 mixer.

Every stochastic operation in this package draws from a `RandomStream`
seeded with an explicit 64-bit integer, so results replay bit-for-bit on
any platform. The generator is counter-based: output i of a stream with
seed s is mix64(s + (i + 1) * GOLDEN), which also makes bulk generation
vectorizable with numpy uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 scalars or arrays (modular arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *tags: int) -> int:
    """Fold integer tags into a seed, producing an independent child seed.

    Used to give sub-operations (per-epoch shuffles, per-sample jitter)
    their own streams without correlated draws.
    """
    state = np.uint64(seed & _MASK64)
    for tag in tags:
        with np.errstate(over="ignore"):
            state = _mix64(state + _GOLDEN + _mix64(np.uint64(tag & _MASK64)))
    return int(state)


class RandomStream:
    """Counter-based splitmix64 stream of doubles, normals and integers."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & _MASK64)
        self._count = 0

    def derive(self, *tags: int) -> "RandomStream":
        return RandomStream(derive_seed(int(self._seed), *tags))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            return _mix64(self._seed + idx * _GOLDEN)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n doubles uniform in [low, high), using the top 53 bits."""
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return low + u * (high - low)

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """n Gaussian doubles via Box-Muller (mean 0, std sigma)."""
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        # avoid log(0); u1 == 0 happens with probability 2^-53 per draw
        r = np.sqrt(-2.0 * np.log(np.maximum(u1, 2.0 ** -60)))
        out = np.concatenate([r * np.cos(2.0 * np.pi * u2),
                              r * np.sin(2.0 * np.pi * u2)])[:n]
        return out * sigma

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n integers uniform in [0, bound) (fraction method)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return np.minimum((self.uniform(n) * bound).astype(np.int64), bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n, dtype=np.int64)
        if n > 1:
            draws = self.uniform(n - 1)
            for i in range(n - 1, 0, -1):
                j = min(int(draws[n - 1 - i] * (i + 1)), i)
                perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), uniform without replacement."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = np.arange(n, dtype=np.int64)
        draws = self.uniform(k)
        for i in range(k):
            j = i + min(int(draws[i] * (n - i)), n - i - 1)
            pool[i], pool[j] = pool[j], pool[i]
        return np.sort(pool[:k])
