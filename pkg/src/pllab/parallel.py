"""Bounded worker pool shared by every module.

Results are always returned in input order, so reports do not depend on
completion order. Threads are used because fields are arbitrary Python
callables (closures are not picklable).
"""

import os
from concurrent.futures import ThreadPoolExecutor

_jobs = 1


def set_jobs(n=None):
    global _jobs
    _jobs = max(1, int(n if n is not None else (os.cpu_count() or 1)))


def get_jobs():
    return _jobs


def pmap(fn, items):
    items = list(items)
    if _jobs == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(_jobs, len(items))) as pool:
        return list(pool.map(fn, items))
