"""Bounded worker pool whose results come back in submission order."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def ordered_map(fn, tasks, workers: int = 1):
    """``[fn(*t) for t in tasks]``, optionally across ``workers`` processes.

    Every task carries its own seed, so the result list is identical to the
    sequential one regardless of scheduling.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        futures = [ex.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]
