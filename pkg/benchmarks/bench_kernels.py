"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from atomprep import kernels
from atomprep.kernels import python_backend


def _time(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng):
    xi6 = -np.triu(rng.uniform(size=(6, 6)), 1)
    xi6 = xi6 + xi6.T
    xi9 = -np.triu(rng.uniform(size=(9, 9)), 1)
    xi9 = xi9 + xi9.T
    m = 400
    kind = rng.integers(0, 2, m).astype(np.int64)
    lo = rng.integers(0, 30, m).astype(np.int64)
    hi = lo + rng.integers(1, 6, m).astype(np.int64)
    w = rng.uniform(size=m)
    return [
        ("connected_graph_sum k=6", "connected_graph_sum", (xi6,)),
        ("connected_sum_recursive k=9", "connected_sum_recursive", (xi9,)),
        ("count_labeled_trees n=7", "count_labeled_trees", (7,)),
        ("kp_neighbor_sums m=400", "kp_neighbor_sums", (kind, lo, hi, w)),
    ]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    compiled = kernels.compiled_backend
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<30} {'python [s]':>12} {'cython [s]':>12} {'speedup':>9}")
    for label, name, a in _cases(np.random.default_rng(0)):
        tp = _time(getattr(python_backend, name), *a, repeat=args.repeat)
        if compiled is None:
            print(f"{label:<30} {tp:>12.3e} {'n/a':>12} {'n/a':>9}")
            continue
        tc = _time(getattr(compiled, name), *a, repeat=args.repeat)
        print(f"{label:<30} {tp:>12.3e} {tc:>12.3e} {tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
