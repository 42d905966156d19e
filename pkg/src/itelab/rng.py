"""Deterministic, splittable random streams.

Every random quantity in the package is drawn from a generator keyed by a
:class:`SeedPath`.  The key is hashed by :class:`numpy.random.SeedSequence`
into a Philox (counter-based) bit generator, so the stream for a given
``(master_seed, stream_index, path)`` never depends on which thread or in
which order it is consumed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

_U64 = 2**64


@dataclass(frozen=True)
class SeedPath:
    master_seed: int
    stream_index: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < _U64):
            raise InvalidInput(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.stream_index < 0 or any(p < 0 for p in self.path):
            raise InvalidInput("stream indices must be nonnegative")

    def child(self, index: int) -> "SeedPath":
        """Independent sub-stream, e.g. one per Monte Carlo block inside a trial."""
        return SeedPath(self.master_seed, self.stream_index, self.path + (int(index),))

    def stream(self, index: int) -> "SeedPath":
        """Sibling stream with a different top-level index (one per trial)."""
        return SeedPath(self.master_seed, int(index), self.path)

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(int(self.stream_index),) + tuple(self.path)
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def as_seed_path(seed) -> SeedPath:
    """Accept a SeedPath, a bare integer master seed, or None (seed 0)."""
    if isinstance(seed, SeedPath):
        return seed
    if seed is None:
        return SeedPath(0)
    return SeedPath(int(seed))
