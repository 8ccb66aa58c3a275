#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel with both backends on identical pre-generated noise and
prints timings plus the speedup.  Numba compilation happens during a warmup
pass and is excluded from the timings.

Usage: python benchmarks/bench_kernels.py [--repeat 3]
(PATHHEAT_NUMBA=0 runs of the library itself would use the numpy path; this
script imports both backends directly.)
"""

import argparse
import time

import numpy as np

from pathheat._kernels import numba_backend as KJ
from pathheat._kernels import numpy_backend as KN
from pathheat.geometry import Sphere
from pathheat.jacobi import default_delta
from pathheat.pathgrid import Partition, random_admissible_path


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases():
    rng = np.random.default_rng(0)
    S = Sphere(2)
    delta = default_delta(S)
    cases = []

    # geodesic random walk: 20k paths x 16 substeps
    x = S.random_point(rng, size=20_000)
    zeta = rng.standard_normal((20_000, 16, 3))
    cases.append(("walk_substeps 20k x 16",
                  lambda mod: mod.walk_substeps(x, zeta, 0.08, 1.0)))

    # horizontal walk with pushforwards: 5k paths x 64 steps
    x0 = np.array([0.0, 0.0, 1.0])
    u0 = S.canonical_frame(x0)
    dB = rng.standard_normal((5_000, 64, 2)) * 0.125
    h = rng.standard_normal((65, 2))
    cases.append(("horizontal_push 5k x 64",
                  lambda mod: mod.horizontal_push(x0, u0, dB, h, 1.0)))

    # drift assembly on a 32-interval path, 2000 evaluations
    path, frames = random_admissible_path(S, Partition(32), delta, rng)
    pts, fr0 = path.points, frames[0]

    def drift_many(mod):
        for _ in range(2000):
            mod.drift_block(pts, fr0, 1 / 32, 1.0, 1.0)

    cases.append(("drift_block n=32 x 2000", drift_many))

    # SDE trajectory: 20k Heun steps with the full drift at n = 16
    path16, frames16 = random_admissible_path(S, Partition(16), delta, rng,
                                              scale=0.15)
    xi = rng.standard_normal((20_500, 16, 2))
    cases.append((
        "she_trajectory n=16 x 20k",
        lambda mod: mod.she_trajectory(
            path16.points.copy(), frames16[0], 1 / 16, 1e-5, 20_000, xi,
            1.0, 1.0, delta, True, 1000,
        ),
    ))

    # MALA chain: 200k steps at n = 4
    pts0 = np.zeros((5, 3))
    pts0[:, 2] = 1.0
    zeta_m = rng.standard_normal((200_000, 4, 3))
    logu = np.log(rng.uniform(size=200_000))
    cases.append((
        "mala_chain n=4 x 200k",
        lambda mod: mod.mala_chain(pts0.copy(), 0.25, delta, 0.05, 200_000,
                                   zeta_m, logu, 1.0, 1.0, 1000, 20),
    ))
    return cases


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cases = build_cases()
    print(f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    print("-" * 60)
    for name, fn in cases:
        fn(KJ)  # JIT warmup
        t_np = timeit(lambda: fn(KN), args.repeat)
        t_jit = timeit(lambda: fn(KJ), args.repeat)
        print(f"{name:<28} {t_np:>9.3f}s {t_jit:>9.3f}s {t_np / t_jit:>8.1f}x")


if __name__ == "__main__":
    main()
