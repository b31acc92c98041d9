"""Order-preserving fan-out over a process pool."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def _run_chunk(fn, chunk):
    return [fn(item) for item in chunk]


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, optionally spread over ``workers`` processes.

    Items are split into contiguous chunks and results are concatenated in
    chunk order, so the output never depends on the worker count. ``fn`` must
    be picklable (a module-level function or a ``functools.partial`` of one).
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    n = min(workers, len(items))
    bounds = [round(i * len(items) / n) for i in range(n + 1)]
    chunks = [items[bounds[i]:bounds[i + 1]] for i in range(n)]
    with ProcessPoolExecutor(max_workers=n) as pool:
        parts = list(pool.map(_run_chunk, [fn] * n, chunks))
    return [r for part in parts for r in part]
