"""Ordered task pool.

Work is always split into the same fixed tasks; the worker count only
decides where they run, and results come back in task order, so outputs are
identical for any thread count.
"""

import os
from concurrent.futures import ProcessPoolExecutor

ENV_THREADS = "DEGENLAB_THREADS"


def resolve_workers(workers=None):
    if workers is None:
        workers = int(os.environ.get(ENV_THREADS, "1") or 1)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def run_tasks(fn, tasks, workers=1):
    workers = resolve_workers(workers)
    tasks = list(tasks)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*args) for args in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        futures = [pool.submit(fn, *args) for args in tasks]
        return [f.result() for f in futures]
