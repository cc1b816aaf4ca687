#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeat 5]

The active path in the library is chosen at import time (numba unless
LANDPATCH_NO_NUMBA is set); this script times both implementations
directly, so it is independent of that flag.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from landpatch import kernels


def best_of(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 64, 64, 3))
    w = rng.normal(size=(3, 3, 3, 16))
    b = rng.normal(size=16)
    dy = rng.normal(size=(8, 62, 62, 16))
    img = rng.uniform(0, 255, size=(200, 200, 3))
    affine = (img, 0.9, 0.1, 3.0, -0.1, 0.9, 2.0, kernels.FILL_REFLECT, 0.0, kernels.INTERP_BILINEAR)

    cases = [
        ("conv2d_forward", kernels.conv2d_forward_np, kernels.conv2d_forward_nb, (x, w, b, 1)),
        ("conv2d_backward", kernels.conv2d_backward_np, kernels.conv2d_backward_nb, (x, w, dy, 1)),
        ("maxpool_forward", kernels.maxpool_forward_np, kernels.maxpool_forward_nb, (x, 2)),
        ("affine_sample", kernels.affine_sample_np, kernels.affine_sample_nb, affine),
    ]

    if not kernels.HAS_NUMBA:
        print("numba is not importable; only the numpy path can be timed")

    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, np_fn, nb_fn, a in cases:
        t_np = best_of(np_fn, a, args.repeat)
        if kernels.HAS_NUMBA:
            t_nb = best_of(nb_fn, a, args.repeat)
            print(f"{name:<18} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x")
        else:
            print(f"{name:<18} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
