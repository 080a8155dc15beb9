"""Compare the compiled tree kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--rows 5000] [--features 9] [--repeat 5]
"""

import argparse
import statistics
import time

import numpy as np

from hosprisk.models import RandomForestParams, TrainingSet, kernels, train
from hosprisk.models import _kernels_py


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times), statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--features", type=int, default=9)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        from hosprisk.models import _kernels as compiled
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    X = rng.normal(size=(args.rows, args.features)).round(2)
    y = (X[:, 0] + 0.5 * X[:, 1] + rng.normal(size=args.rows) > 0).astype(np.float64)
    w = np.ones(args.rows)
    idx = np.arange(args.rows, dtype=np.intp)
    feats = np.arange(args.features, dtype=np.intp)

    print(f"{args.rows} rows x {args.features} features, best/median of {args.repeat}")
    print(f"{'workload':<34}{'python (s)':>12}{'cython (s)':>12}{'speedup':>9}")

    def row(label, slow, fast):
        s, _ = best_of(slow, args.repeat)
        f, _ = best_of(fast, args.repeat)
        print(f"{label:<34}{s:>12.4f}{f:>12.4f}{s / f:>8.1f}x")

    row(
        "best_split, root node, gini",
        lambda: _kernels_py.best_split(X, y, w, idx, feats, 1, kernels.GINI),
        lambda: compiled.best_split(X, y, w, idx, feats, 1, kernels.GINI),
    )
    row(
        "best_split, root node, mse",
        lambda: _kernels_py.best_split(X, y, w, idx, feats, 1, kernels.MSE),
        lambda: compiled.best_split(X, y, w, idx, feats, 1, kernels.MSE),
    )

    data = TrainingSet(X, y.astype(bool), tuple(f"x{i}" for i in range(args.features)))
    hp = RandomForestParams(n_trees=20, max_depth=10, min_samples_leaf=2)
    previous = kernels.BACKEND

    def forest(backend):
        def fit():
            kernels.use_backend(backend)
            train("random_forest", data, hp, seed=args.seed)
        return fit

    row("random forest, 20 trees, depth 10", forest("python"), forest("cython"))
    tree = train("random_forest", data, hp, seed=args.seed).trees[0]
    args_apply = (X, tree.feature, tree.threshold, tree.left, tree.right)
    row(
        "apply_tree, one tree",
        lambda: _kernels_py.apply_tree(*args_apply),
        lambda: compiled.apply_tree(*args_apply),
    )
    kernels.use_backend(previous)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
