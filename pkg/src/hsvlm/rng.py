"""Seedable deterministic RNG on top of numpy's PCG64.

A (seed, stream) pair fully determines the draw sequence, bitwise,
across platforms. `clone()` snapshots the generator state so an oracle
can replay the exact draws a consumer is about to make.
"""

import copy

import numpy as np


class Rng:
    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def clone(self) -> "Rng":
        other = Rng(self.seed, self.stream)
        other.gen.bit_generator.state = copy.deepcopy(self.gen.bit_generator.state)
        return other

    def normal(self, shape, std=1.0, dtype=np.float32):
        return (self.gen.standard_normal(shape) * std).astype(dtype)

    def truncated_normal(self, shape, std, dtype=np.float32):
        # plain normal clipped at +/- 2 std
        x = self.gen.standard_normal(shape) * std
        return np.clip(x, -2.0 * std, 2.0 * std).astype(dtype)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice_without_replacement(self, pool: np.ndarray, k: int) -> np.ndarray:
        return self.gen.choice(pool, size=k, replace=False)

    def integers(self, low, high, size=None):
        return self.gen.integers(low, high, size=size)


def derive_rng(seed: int, *parts: int) -> Rng:
    """Substream keyed by extra integers (e.g. epoch), reproducible per key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in parts))
    r = Rng(0, 0)
    r.seed = int(seed)
    r.stream = -1
    r.gen = np.random.Generator(np.random.PCG64(ss))
    return r
