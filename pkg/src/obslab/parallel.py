"""Order-preserving parallel map, capped by the OBSLAB_THREADS environment variable."""

import os
from concurrent.futures import ThreadPoolExecutor


def max_workers() -> int:
    raw = os.environ.get("OBSLAB_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(n, 1)


def parallel_map(fn, items):
    """``[fn(x) for x in items]``, possibly on threads; result order is the input order."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
