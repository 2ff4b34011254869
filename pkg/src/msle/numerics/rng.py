"""Seeded, splittable random streams.

Every Monte-Carlo trial gets its own ``SeededRng``.  The underlying bit
generator is PCG64 seeded through ``numpy.random.SeedSequence`` with
``entropy=seed`` and ``spawn_key=(stream_index, *key)``, so a stream is a pure
function of ``(seed, stream_index, key)`` and streams with different keys are
statistically independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SEED_MASK = (1 << 64) - 1


@dataclass
class SeededRng:
    seed: int
    stream_index: int = 0
    key: tuple[int, ...] = ()
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")
        self.seed = int(self.seed) & SEED_MASK

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index, *self.key))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, *key: int) -> "SeededRng":
        """Independent stream derived from this one (does not consume draws)."""
        return SeededRng(self.seed, self.stream_index, self.key + tuple(int(k) for k in key))

    def stream(self, index: int) -> "SeededRng":
        return SeededRng(self.seed, int(index), self.key)


def as_generator(rng) -> np.random.Generator:
    """Accept a SeededRng, a numpy Generator or an integer seed."""
    if isinstance(rng, SeededRng):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng)).gen
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
