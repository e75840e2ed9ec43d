"""Deterministic random-number streams.

All randomness in the package flows through counter-based Philox generators
keyed by an integer seed plus a path of non-negative integers (replication
index, stream index, purpose tag).  Results are therefore identical no matter
how work is chunked across workers.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]


def seed_entropy(seed: SeedLike) -> list[int]:
    """Normalize a seed (int or sequence of ints) to an entropy list."""
    if isinstance(seed, (int, np.integer)):
        entropy = [int(seed)]
    else:
        entropy = [int(s) for s in seed]
    if not entropy:
        raise ValueError("seed must contain at least one integer")
    if any(s < 0 for s in entropy):
        raise ValueError("seed components must be non-negative")
    return entropy


def substream(seed: SeedLike, *path: int) -> np.random.Generator:
    """Generator for the substream identified by ``(seed, *path)``."""
    entropy = seed_entropy(seed) + [int(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def stream_generators(seed: SeedLike, *path: int, count: int) -> Iterable[np.random.Generator]:
    """Independent per-stream generators below one substream.

    Stream ``i`` gets the base Philox counter jumped ``i`` times, so the
    streams are independent and addressable without spawning.
    """
    base = np.random.Philox(np.random.SeedSequence(seed_entropy(seed) + [int(p) for p in path]))
    for i in range(count):
        # jumped() is pure: each stream gets an independent copy of the counter.
        yield np.random.Generator(base.jumped(i))
