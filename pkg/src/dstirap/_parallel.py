"""Order-preserving process-pool map shared by the scan drivers."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_jobs(jobs) -> int:
    if jobs is None or jobs <= 0:
        return os.cpu_count() or 1
    return int(jobs)


def ordered_map(func, items, jobs=1):
    """``[func(x) for x in items]`` evaluated on up to ``jobs`` processes.

    Results come back in input order whatever the completion order, so the
    output does not depend on the worker count. ``func`` must be picklable
    when ``jobs > 1``.
    """
    items = list(items)
    jobs = min(resolve_jobs(jobs), max(len(items), 1))
    if jobs == 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))
