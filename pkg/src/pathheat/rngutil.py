"""Seeding and deterministic work partitioning.

Every Monte Carlo routine derives child streams from (master seed, task
index) via SeedSequence spawn keys, so results are identical for any worker
count and any execution order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

SEED_ENV = "PATHHEAT_SEED"


def master_seed(seed=None):
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def rng_from(seed, *key):
    """Generator for a (seed, key...) slot; stable across runs."""
    ss = np.random.SeedSequence(master_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def child_rngs(rng_or_seed, count, salt=0):
    """count generators derived deterministically from a seed or Generator."""
    if isinstance(rng_or_seed, np.random.Generator):
        # derive from the generator's own stream to stay reproducible
        base = int(rng_or_seed.integers(0, 2**63 - 1))
    else:
        base = master_seed(rng_or_seed)
    return [
        np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(base, spawn_key=(salt, i)))
        )
        for i in range(count)
    ]


def parallel_map(fn, items, threads=None):
    """Order-preserving map; results independent of thread count."""
    items = list(items)
    if threads is None:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def chunk_sizes(total, chunk):
    out = []
    while total > 0:
        out.append(min(chunk, total))
        total -= out[-1]
    return out
