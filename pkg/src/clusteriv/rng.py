"""Seeded random streams.

Every stochastic routine takes an integer seed. Replicate ``b`` of a run
draws from its own Philox stream keyed by ``(seed, b)``, so results do not
depend on the order in which replicates are executed or on how many worker
threads are used. Streams are reproducible for a fixed NumPy release; NumPy
reserves the right to change ``Generator`` sampling algorithms across
feature releases.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")


def substream(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seeds and stream keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def resolve_threads(threads: int | None) -> int:
    """``threads`` if given, else ``$CLUSTERIV_THREADS``, else 1."""
    if threads is None:
        threads = int(os.environ.get("CLUSTERIV_THREADS", "1") or 1)
    return max(1, int(threads))


def ordered_map(fn: Callable[[int], T], items: Iterable[int], threads: int | None = 1) -> list[T]:
    """``[fn(i) for i in items]``, optionally on a thread pool; order is preserved."""
    threads = resolve_threads(threads)
    items = list(items)
    if threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
