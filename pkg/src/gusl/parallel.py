"""Worker-pool helper honoring the GUSL_THREADS environment variable.

GUSL_THREADS caps the thread count for per-image work; 0 or unset means
auto (cpu count, capped at 8). Results always come back in input order, so
parallel runs stay deterministic.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import InvalidConfigError

ENV_VAR = "GUSL_THREADS"


def max_workers() -> int:
    raw = os.environ.get(ENV_VAR, "0")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfigError(f"{ENV_VAR} must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidConfigError(f"{ENV_VAR} must be >= 0, got {n}")
    if n == 0:
        return min(os.cpu_count() or 1, 8)
    return n


def ordered_map(fn, items) -> list:
    items = list(items)
    workers = min(max_workers(), len(items)) or 1
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
