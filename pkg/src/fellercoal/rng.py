"""Reproducible random streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SEED = 20240531


@dataclass(frozen=True)
class SeededSource:
    """A (seed, stream_id) pair naming one reproducible random stream.

    Distinct ``stream_id`` values under the same seed give statistically
    independent streams, so parallel Monte Carlo can hand one to each worker.
    """

    seed: int = DEFAULT_SEED
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))

    def spawn(self, stream_id: int) -> SeededSource:
        return SeededSource(self.seed, stream_id)


def as_generator(source) -> np.random.Generator:
    """Accept a SeededSource, a numpy Generator, an int seed or None."""
    if isinstance(source, np.random.Generator):
        return source
    if isinstance(source, SeededSource):
        return source.generator()
    if source is None:
        return SeededSource().generator()
    return SeededSource(int(source)).generator()
