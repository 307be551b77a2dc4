"""Order-preserving parallel map with results independent of worker count.

Each task must be a pure function of its item (per-item RNG streams are
derived by the caller, e.g. from SeedSequence([seed, row_index])), so
running with 1 or N workers produces bit-identical output. The worker
count can be forced through the TABROBUST_WORKERS environment variable.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "TABROBUST_WORKERS"


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        return max(1, int(env))
    if workers is None:
        return 1
    return max(1, workers)


def seeded_parallel_map(
    fn: Callable[[T], R], items: Sequence[T], workers: int | None = None
) -> list[R]:
    """Map fn over items, preserving order; workers<=1 runs inline."""
    n_workers = resolve_workers(workers)
    items = list(items)
    if n_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
