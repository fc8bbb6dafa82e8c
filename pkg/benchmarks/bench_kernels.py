#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure-numpy fallbacks.

Covers the three hot numeric kernels: Gaussian product Gram assembly,
condensed pairwise distances (median heuristic), and pivoted incomplete
Cholesky. The library picks the compiled path by default where it wins;
``KPOMDP_NUMBA=0`` forces the numpy path everywhere.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 500 1000 2000 --output bench.json
"""

import argparse
import json
import time

import numpy as np

from kpomdp import _accel
from kpomdp.kernels import gaussian_kernel, gram


def timeit(fn, repeats):
    fn()  # warm-up (JIT compilation for the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_gram(sizes, repeats):
    print("\nGaussian product Gram (n x n, d = 2)")
    print(f"{'n':>6} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    rows = []
    rng = np.random.default_rng(0)
    for n in sizes:
        pts = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-3, 3, n)])
        bw = np.array([0.05, 0.3])
        t_nb = timeit(lambda: _accel.gaussian_gram_numba(pts, pts, bw), repeats)
        t_np = timeit(lambda: _accel.gaussian_gram_numpy(pts, pts, bw), repeats)
        print(f"{n:>6} {1e3 * t_nb:>12.2f} {1e3 * t_np:>12.2f} {t_np / t_nb:>8.2f}x")
        rows.append({"n": n, "numba_ms": 1e3 * t_nb, "numpy_ms": 1e3 * t_np})
    return rows


def bench_distances(sizes, repeats):
    print("\nCondensed pairwise distances (n points, d = 2)")
    print(f"{'n':>6} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    rows = []
    rng = np.random.default_rng(1)
    for n in sizes:
        pts = rng.normal(size=(n, 2))
        t_nb = timeit(lambda: _accel.pairwise_distances_numba(pts), repeats)
        t_np = timeit(lambda: _accel.pairwise_distances_numpy(pts), repeats)
        print(f"{n:>6} {1e3 * t_nb:>12.2f} {1e3 * t_np:>12.2f} {t_np / t_nb:>8.2f}x")
        rows.append({"n": n, "numba_ms": 1e3 * t_nb, "numpy_ms": 1e3 * t_np})
    return rows


def bench_icf(sizes, repeats):
    print("\nPivoted incomplete Cholesky (rank cap n/4)")
    print(f"{'n':>6} {'rank':>6} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    rows = []
    rng = np.random.default_rng(2)
    for n in sizes:
        pts = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-3, 3, n)])
        g = gram(gaussian_kernel((0.05, 0.3)), pts, pts)
        cap = max(n // 4, 8)
        t_nb = timeit(lambda: _accel.icf_numba(g, cap, 0.0), repeats)
        t_np = timeit(lambda: _accel.icf_numpy(g, cap, 0.0), repeats)
        rank = _accel.icf_numpy(g, cap, 0.0)[0].shape[1]
        print(f"{n:>6} {rank:>6} {1e3 * t_nb:>12.2f} {1e3 * t_np:>12.2f} {t_np / t_nb:>8.2f}x")
        rows.append({"n": n, "rank": rank, "numba_ms": 1e3 * t_nb, "numpy_ms": 1e3 * t_np})
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[250, 500, 1000, 2000])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--output", default=None, help="write results as JSON")
    args = parser.parse_args()

    print(f"numba available: {_accel.NUMBA_AVAILABLE}, library default uses numba: {_accel.USE_NUMBA}")
    results = {
        "gram": bench_gram(args.sizes, args.repeats),
        "distances": bench_distances(args.sizes, args.repeats),
        "icf": bench_icf(args.sizes, args.repeats),
    }
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(results, fh, indent=2)
        print(f"\nresults -> {args.output}")


if __name__ == "__main__":
    main()
