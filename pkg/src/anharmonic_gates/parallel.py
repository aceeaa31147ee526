"""Order-preserving map over independent work items."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def ordered_map(fn, items, workers: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool.

    Results always come back in input order, so any reduction done by the
    caller is independent of the worker count.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
