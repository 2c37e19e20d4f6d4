"""Compare the numba and pure-numpy kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one CSV line per (kernel, size, backend) with the best wall time of
``--repeat`` runs and the max abs difference between the two backends.
"""

import argparse
import time

import numpy as np

from threshcal import _accel


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print("kernel,n_sample,n_points,backend,seconds,max_abs_diff")

    grid = np.linspace(0, 1, 1001)
    for n in (1_000, 4_000, 16_000):
        s = rng.beta(2, 5, n)
        _accel.kde_logpdf_numba(s[:10], 0.05, grid[:10])  # compile outside the timing
        ref = _accel.kde_logpdf_numpy(s, 0.05, grid)
        diff = float(np.max(np.abs(_accel.kde_logpdf_numba(s, 0.05, grid) - ref)))
        for name in ("numpy", "numba"):
            fn = getattr(_accel, f"kde_logpdf_{name}")
            t = best_time(lambda: fn(s, 0.05, grid), args.repeat)
            print(f"kde_logpdf,{n},{grid.size},{name},{t:.6f},{diff:.2e}")

    knots = np.concatenate([np.zeros(4), np.linspace(0.1, 0.9, 10), np.ones(4)])
    for n in (1_000, 10_000, 100_000):
        x = rng.uniform(size=n)
        _accel.bspline_design_numba(x[:10], knots, 3)
        diff = float(np.max(np.abs(_accel.bspline_design_numba(x, knots, 3) - _accel.bspline_design_numpy(x, knots, 3))))
        for name in ("numpy", "numba"):
            fn = getattr(_accel, f"bspline_design_{name}")
            t = best_time(lambda: fn(x, knots, 3), args.repeat)
            print(f"bspline_design,{n},-,{name},{t:.6f},{diff:.2e}")


if __name__ == "__main__":
    main()
