"""Tiny worker-pool helper: order-preserving map over independent tasks.

Tasks are designed to be independent and deterministic, and results are
assembled in input order, so the worker count never changes any output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def available_workers() -> int:
    return os.cpu_count() or 1


def map_ordered(fn: Callable[[T], R], items: Sequence[T], workers: int | None) -> list[R]:
    """Apply ``fn`` to every item, preserving input order in the result."""
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
