#!/usr/bin/env python3
"""Benchmark the pair correlation kernels: compiled extension vs numpy.

Generates Poisson patterns of growing size on the unit square and times
estimate_pcf under both backends on the default 25-lag grid.

    python benchmarks/bench_pcf.py [--sizes 2000,8000,32000] [--types 5]
"""

import argparse
import time

import numpy as np

from mlgcp.model import UNIT_SQUARE
from mlgcp.patterns import MultiPointPattern
from mlgcp.pcf import HAVE_COMPILED_KERNEL, estimate_pcf


def make_pattern(total_points, p, rng):
    pts = rng.uniform(0.0, 1.0, (total_points, 2))
    split = np.array_split(pts, p)
    return MultiPointPattern(UNIT_SQUARE, split)


def time_backend(pattern, backend, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        est = estimate_pcf(pattern, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, est


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="2000,8000,32000")
    parser.add_argument("--types", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = ["numpy"] + (["compiled"] if HAVE_COMPILED_KERNEL else [])
    if not HAVE_COMPILED_KERNEL:
        print("compiled kernel not available; timing numpy fallback only")
    rng = np.random.default_rng(args.seed)

    print(f"{'points':>8} {'pairs<=rmax':>12} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for total in map(int, args.sizes.split(",")):
        pattern = make_pattern(total, args.types, rng)
        times = {}
        checks = {}
        for backend in backends:
            times[backend], est = time_backend(pattern, backend)
            checks[backend] = est.ghat
        npairs = int(total * (total - 1) * np.pi * (est.lags[-1] + est.bandwidth) ** 2)
        if len(backends) == 2:
            err = np.max(np.abs(checks["numpy"] - checks["compiled"]))
            scale = max(checks["numpy"].max(), 1.0)
            assert err <= 1e-9 * scale, f"backends disagree: {err}"
            speedup = times["numpy"] / times["compiled"]
        else:
            speedup = float("nan")
        print(
            f"{total:>8} {npairs:>12} "
            + " ".join(f"{times[b]:>9.3f}s" for b in backends)
            + f"   {speedup:6.1f}x"
        )


if __name__ == "__main__":
    main()
