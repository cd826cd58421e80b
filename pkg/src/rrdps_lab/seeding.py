"""Deterministic random-stream derivation.

A master seed is split into independent per-task streams keyed by task
index, never by arrival order, so running trials in parallel cannot
change any result.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for stream ``key`` under ``seed`` (empty key = root stream)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def subseed(seed: int, *key: int) -> int:
    """Derive a child integer seed, for nesting seeded scans."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _run_trial(task):
    fn, seed, index = task
    return fn(index, make_rng(seed, index))


def map_trials(fn, trials: int, seed: int, threads: int = 1) -> list:
    """Run ``fn(trial_index, rng)`` for each trial, in index order.

    Results are identical for any ``threads`` value because each trial's
    generator depends only on (seed, trial_index).
    """
    tasks = [(fn, seed, i) for i in range(trials)]
    if threads > 1 and trials > 1:
        chunk = max(1, trials // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_trial, tasks, chunksize=chunk))
    return [_run_trial(t) for t in tasks]
