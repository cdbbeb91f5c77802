"""Worker-pool helper with deterministic ordered collection.

Per-item results are computed independently and gathered in input order,
so output is identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_workers(workers=None):
    """Normalize a worker-count request (None/0 means available parallelism)."""
    if workers is None:
        env = os.environ.get("TRANSPORTCTL_WORKERS")
        if env:
            workers = int(env)
    if not workers or workers < 1:
        workers = os.cpu_count() or 1
    return int(workers)


def parallel_map(fn, items, workers=None):
    """Map `fn` over `items`, preserving order. Threads suit the numpy/LAPACK
    workloads here (the GIL is released inside the solvers)."""
    items = list(items)
    n = resolve_workers(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
