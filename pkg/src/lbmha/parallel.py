"""Deterministic parallel map.

Jobs are pure functions of their inputs and results are returned in
submission order, so the output is identical for any worker count; a single
worker runs in-process.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from .errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "LBMHA_WORKERS"


def resolve_workers(requested: int | None) -> int:
    """Explicit value, else the LBMHA_WORKERS environment variable, else 1."""
    if requested is None:
        env = os.environ.get(WORKERS_ENV)
        requested = int(env) if env else 1
    if requested < 1:
        raise ConfigError(f"worker count must be >= 1, got {requested}")
    return requested


def pmap(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
