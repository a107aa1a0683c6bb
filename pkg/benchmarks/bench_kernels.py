"""Compare the compiled kernels with the NumPy fallback.

Run: python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from mimic_sem import _kernels_py

try:
    from mimic_sem import _kernels
except ImportError:
    _kernels = None


def cases():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 500)
    grid = np.linspace(0, 1, 100)
    Z = np.ascontiguousarray(rng.standard_normal((1000, 5)))
    return {
        "loess_rows N=500 (observations)": lambda m: m.loess_rows(x, x, 375, 2, 0.75),
        "loess_rows N=500 (100-pt grid)": lambda m: m.loess_rows(x, grid, 375, 2, 0.75),
        "mardia_sums N=1000 p=5": lambda m: m.mardia_sums(Z),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback can be timed")
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:34s} {t_py:11.2f} {'-':>12s} {'-':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {t_py:11.2f} {t_c:12.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
