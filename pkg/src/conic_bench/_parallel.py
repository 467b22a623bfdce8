"""Deterministic parallel map over independent work units.

Workers receive a shared read-only context through the pool initializer;
results are returned in submission order, so serial and parallel execution
produce identical output.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

_CONTEXT: dict = {}


def get_context() -> dict:
    return _CONTEXT


def _init_worker(ctx: dict) -> None:
    global _CONTEXT
    _CONTEXT = ctx


def parallel_map(fn: Callable, items: Sequence, threads: int, ctx: dict | None = None) -> list:
    ctx = ctx or {}
    if threads <= 1 or len(items) <= 1:
        _init_worker(ctx)
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                             initargs=(ctx,)) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
