#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Run after building the extension (pip install -e .):

    python benchmarks/bench_kernels.py [--captions 400] [--points 20000]

Both backends compute identical results; this only reports the speed gap so
you know what running under VISCOH_PURE_PYTHON=1 costs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from viscoh._kernels import flatten_token_rows, pure

try:
    from viscoh._kernels import _cykernels as compiled
except ImportError:
    compiled = None


def _time(fn, *args, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--captions", type=int, default=400,
                        help="token rows per side for the pairwise ROUGE block")
    parser.add_argument("--points", type=int, default=20000,
                        help="points for the k-means assignment step")
    parser.add_argument("--medoid-points", type=int, default=1200)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--clusters", type=int, default=50)
    args = parser.parse_args()

    if compiled is None:
        print("compiled extension not available; showing pure timings only")

    rng = np.random.default_rng(0)
    rows = [np.array(rng.integers(0, 50, size=rng.integers(4, 16)), dtype=np.int32)
            for _ in range(args.captions)]
    flat, offsets = flatten_token_rows(rows)
    X = rng.normal(size=(args.points, args.dim))
    C = rng.normal(size=(args.clusters, args.dim))
    M = rng.normal(size=(args.medoid_points, args.dim))

    cases = [
        (f"rouge_f1_block ({args.captions}x{args.captions} pairs)",
         lambda backend: backend.rouge_f1_block(flat, offsets, flat, offsets)),
        (f"assign_points ({args.points} pts, {args.clusters} centroids, dim {args.dim})",
         lambda backend: backend.assign_points(X, C)),
        (f"distance_rowsums ({args.medoid_points} pts, dim {args.dim})",
         lambda backend: backend.distance_rowsums(M)),
    ]

    header = f"{'kernel':<58} {'pure':>10} {'compiled':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, runner in cases:
        pure_time = _time(runner, pure)
        if compiled is None:
            print(f"{name:<58} {pure_time * 1e3:>8.1f}ms {'-':>10} {'-':>9}")
            continue
        compiled_time = _time(runner, compiled)
        print(f"{name:<58} {pure_time * 1e3:>8.1f}ms "
              f"{compiled_time * 1e3:>8.1f}ms {pure_time / compiled_time:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
