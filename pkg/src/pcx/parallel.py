"""Bounded thread-pool mapping.

The PCX_THREADS environment variable caps worker count for every
dataset-level operation. Results always come back in input order, so a
parallel run is indistinguishable from a sequential one.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_cap() -> int:
    """Worker limit: PCX_THREADS when set and valid, else a small default."""
    raw = os.environ.get("PCX_THREADS")
    if raw is not None:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """map() across a bounded pool, preserving order."""
    items = list(items)
    cap = thread_cap()
    if cap <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(fn, items))
