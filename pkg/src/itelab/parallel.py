"""Ordered parallel map over independent work items.

LAPACK and most numpy kernels release the GIL, so a thread pool gives real
concurrency for the diagonalization-heavy trials.  Results always come back
in item order; callers reduce in that order, which makes aggregates
independent of the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_default_threads: int | None = None


def set_default_threads(n: int | None) -> None:
    global _default_threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _default_threads = n


def default_threads() -> int:
    if _default_threads is not None:
        return _default_threads
    env = os.environ.get("ITELAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    items = list(items)
    n = threads if threads is not None else default_threads()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
