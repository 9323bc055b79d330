"""Order-preserving parallel map used by the sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_jobs(jobs: int | None = None) -> int:
    """``jobs`` if given, else ``NLAB_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get("NLAB_JOBS", "").strip()
        jobs = int(env) if env else 1
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    return jobs


def pmap(fn, items, jobs: int | None = None) -> list:
    """``[fn(x) for x in items]``, spread over ``jobs`` worker processes.

    Results come back in input order, so output does not depend on ``jobs``.
    """
    items = list(items)
    jobs = min(resolve_jobs(jobs), max(1, len(items)))
    if jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))
