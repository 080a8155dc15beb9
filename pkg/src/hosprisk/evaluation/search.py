"""Exhaustive grid search scored by mean stratified k-fold accuracy."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import _random
from .. import models as _models
from .metrics import accuracy
from .split import stratified_kfold


class GridPointError(RuntimeError):
    def __init__(self, params, fold, cause):
        self.params = params
        self.fold = fold
        super().__init__(f"training failed for {params} on fold {fold}: {cause}")


def expand_grid(grid):
    """A dict of value lists (product in key order) or a list of such dicts."""
    if isinstance(grid, dict):
        grid = [grid]
    points = []
    for sub in grid:
        keys = list(sub)
        values = [v if isinstance(v, (list, tuple)) else [v] for v in (sub[k] for k in keys)]
        points.extend(dict(zip(keys, combo)) for combo in itertools.product(*values))
    if not points:
        raise ValueError("empty parameter grid")
    return points


@dataclass
class CandidateResult:
    params: dict
    fold_scores: list
    mean_score: float


@dataclass
class GridSearchResult:
    kind: str
    candidates: list
    best_index: int
    k: int
    model: object = field(default=None, repr=False, compare=False)

    @property
    def best_params(self):
        return self.candidates[self.best_index].params

    @property
    def best_score(self):
        return self.candidates[self.best_index].mean_score

    def to_dict(self):
        return {
            "kind": self.kind,
            "k": self.k,
            "best_params": self.best_params,
            "best_score": self.best_score,
            "candidates": [
                {"params": c.params, "fold_scores": c.fold_scores, "mean_score": c.mean_score}
                for c in self.candidates
            ],
        }


def fold_seed(seed, fold):
    return int(_random.derive_rng(seed, fold).integers(2**31))


def evaluate_point(kind, params, data, folds, seed):
    """Accuracy on each held-out fold when training on the others."""
    scores = []
    all_rows = np.arange(data.n_rows)
    for f, held in enumerate(folds):
        scores.append(_score_fold(kind, params, data, all_rows, held, f, seed))
    return scores


def _score_fold(kind, params, data, all_rows, held, f, seed):
    train_rows = np.setdiff1d(all_rows, held, assume_unique=True)
    try:
        model = _models.train(kind, data.subset(train_rows), dict(params), seed=fold_seed(seed, f))
    except Exception as exc:
        raise GridPointError(params, f, exc) from exc
    return accuracy(model.classify(data.features[held]), data.labels[held])


def grid_search(kind, grid, data, k=5, seed=0, n_jobs=1, refit=True):
    """Score every grid point by mean fold accuracy; the first best point wins ties.

    Model seeds depend only on ``(seed, fold)`` so duplicated grid points score
    identically, and results do not depend on ``n_jobs``.
    """
    kind = _models.canonical_kind(kind)
    points = expand_grid(grid)
    for p in points:
        _models.make_params(kind, **p)  # fail fast on bad names or values
    folds = stratified_kfold(data.labels, k, seed)
    all_rows = np.arange(data.n_rows)
    tasks = [(i, f) for i in range(len(points)) for f in range(k)]

    def run(task):
        i, f = task
        return _score_fold(kind, points[i], data, all_rows, folds[f], f, seed)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            flat = list(pool.map(run, tasks))
    else:
        flat = [run(t) for t in tasks]

    candidates = []
    for i, p in enumerate(points):
        scores = flat[i * k : (i + 1) * k]
        candidates.append(CandidateResult(dict(p), scores, float(np.mean(scores))))
    best = max(range(len(candidates)), key=lambda i: (candidates[i].mean_score, -i))
    result = GridSearchResult(kind, candidates, best, k)
    if refit:
        result.model = _models.train(kind, data, dict(result.best_params), seed=seed)
    return result
