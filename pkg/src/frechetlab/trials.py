"""Trial execution over independent RNG substreams."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_max_workers = None


def set_max_workers(n):
    global _max_workers
    if n is not None and int(n) < 1:
        raise ValueError("worker count must be at least 1")
    _max_workers = None if n is None else int(n)


def max_workers() -> int:
    return _max_workers or os.cpu_count() or 1


def map_trials(fn, n_trials: int, chunk: int = 256) -> list:
    """``[fn(i) for i in range(n_trials)]``, possibly on a thread pool.

    Results always come back in trial order, so reductions over them are
    deterministic regardless of scheduling.
    """
    workers = min(max_workers(), max(1, n_trials // chunk))
    if workers <= 1:
        return [fn(i) for i in range(n_trials)]

    def run(lo):
        return [fn(i) for i in range(lo, min(lo + chunk, n_trials))]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        out = []
        for block in pool.map(run, range(0, n_trials, chunk)):
            out.extend(block)
    return out
