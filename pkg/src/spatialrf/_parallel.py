"""Order-preserving map over a bounded thread pool.

The compiled kernels release the GIL, so threads give real parallelism.
Results come back in input order, which keeps every reduction independent
of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, jobs: int = 1) -> list:
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
