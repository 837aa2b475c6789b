#!/usr/bin/env python3
"""Time the tree-growing kernels: compiled extension vs pure-Python fallback.

Both backends are exercised on the same inputs (they produce bit-identical
trees; the equality is asserted here as a sanity check and tested properly
in tests/test_kernels.py). Run from the repo root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from poroforest._kernels import available_backends
from poroforest.dataset import load_corpus


def _grow_args(X, y, rows, max_splits, min_leaf, features_per_split, seed):
    is_cat = np.zeros(X.shape[1], dtype=bool)
    is_cat[6] = True  # curing condition
    rng = np.random.default_rng(seed)
    return (X, y, rows, is_cat, max_splits, min_leaf, features_per_split, rng)


def _time_backend(module, args_fn, repeats):
    # fresh rng per call so both backends consume identical streams
    best = float("inf")
    result = None
    for _ in range(repeats):
        args = args_fn()
        started = time.perf_counter()
        result = module.grow_tree(*args)
        best = min(best, time.perf_counter() - started)
    return best, result


def _scenarios():
    corpus = load_corpus()
    Xc, yc = corpus.design_matrix()
    n = len(yc)

    rng = np.random.default_rng(0)
    Xl = rng.uniform(size=(180, 8))
    Xl[:, 6] = rng.integers(0, 2, size=180)
    yl = rng.normal(size=180)

    yield ("boosting-style tree, 34-row corpus (max_splits=10)",
           lambda: _grow_args(Xc, yc, np.arange(n), 10, 5, 8, 0))
    yield ("unrestricted tree, 34-row corpus",
           lambda: _grow_args(Xc, yc, np.arange(n), n - 1, 1, 8, 0))
    yield ("forest-style tree, 180 synthetic rows (3 features/split)",
           lambda: _grow_args(Xl, yl, np.arange(180), 179, 5, 3, 1))


def main():
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    if len(backends) < 2:
        print("compiled extension not built; timing the fallback only")
    repeats = 200

    for label, args_fn in _scenarios():
        print(f"\n{label}:")
        timings = {}
        grown = {}
        for name, module in backends.items():
            timings[name], grown[name] = _time_backend(module, args_fn,
                                                       repeats)
            print(f"  {name:>7}: {timings[name] * 1e6:9.1f} us/tree")
        if len(grown) == 2:
            py, cy = grown["python"], grown["cython"]
            identical = all(
                np.array_equal(a, b, equal_nan=True)
                for a, b in zip(py, cy)
            )
            speedup = timings["python"] / timings["cython"]
            print(f"  identical output: {identical}; "
                  f"speedup {speedup:.1f}x")


if __name__ == "__main__":
    main()
