"""Order-preserving parallel map used by the screening and validation loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "UCSCREEN_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None


def pmap(fn, items, threads: int | None = None) -> list:
    """Apply `fn` to every item; results come back in input order.

    With one thread the loop runs inline, so execution is fully serial.
    """
    items = list(items)
    n = default_threads() if threads is None else max(1, int(threads))
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
