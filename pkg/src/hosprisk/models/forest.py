"""Bagged random forest of Gini trees."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import _random
from .base import RandomForestParams, TrainedModel, TrainingSet, register
from .tree import DecisionTree, train_tree


@register
@dataclass
class RandomForestModel(TrainedModel):
    kind = "random_forest"

    trees: list = field(default_factory=list)

    def _raw_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def feature_importances(self):
        imp = np.zeros(len(self.feature_names))
        for tree in self.trees:
            t = tree.feature_importances(imp.shape[0])
            s = t.sum()
            if s > 0:
                imp += t / s
        total = imp.sum()
        return imp / total if total > 0 else imp

    def _state(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_state(cls, state, **common):
        return cls(trees=[DecisionTree.from_dict(t) for t in state["trees"]], **common)


def resolve_features_per_split(hp, n_features):
    if hp.features_per_split is None:
        return math.ceil(math.sqrt(n_features))
    return min(hp.features_per_split, n_features)


def _fit_one(X, y, hp, k, seed, index):
    rng = _random.derive_rng(seed, index)
    n = X.shape[0]
    if hp.bootstrap:
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
    else:
        weights = None
    return train_tree(
        X,
        y,
        max_depth=hp.max_depth,
        min_samples_leaf=hp.min_samples_leaf,
        features_per_split=k,
        seed=int(rng.integers(2**31)),
        sample_weights=weights,
        criterion="gini",
    )


def train_random_forest(data: TrainingSet, hp: RandomForestParams = RandomForestParams(), seed=0, n_jobs=1):
    """Each tree draws its bootstrap and feature subsets from ``(seed, tree index)``,
    so the fitted forest does not depend on ``n_jobs``."""
    X = data.features
    y = data.labels.astype(np.float64)
    k = resolve_features_per_split(hp, X.shape[1])
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, y, hp, k, seed, i), range(hp.n_trees)))
    else:
        trees = [_fit_one(X, y, hp, k, seed, i) for i in range(hp.n_trees)]
    return RandomForestModel(feature_names=data.feature_names, hyperparams=hp, trees=trees)
