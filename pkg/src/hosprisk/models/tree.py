"""CART base learner shared by the forest and the booster.

Splits are ``x <= threshold`` where the threshold is the largest left-hand
training value, so fitted trees partition test data identically under any
strictly increasing transform of a feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _random
from . import kernels

CRITERIA = {"gini": kernels.GINI, "mse": kernels.MSE}


def gini(y, w=None):
    """Gini impurity ``1 - sum p_k^2`` of a binary label vector."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    total = w.sum()
    if total == 0:
        return 0.0
    p = float((w * y).sum() / total)
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


@dataclass
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    impurity_decrease: np.ndarray
    criterion: str

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.left[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def is_leaf(self, node):
        return self.left[node] < 0

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X):
        return self.value[self.apply(X)]

    def feature_importances(self, n_features):
        imp = np.zeros(n_features)
        internal = self.left >= 0
        np.add.at(imp, self.feature[internal], self.impurity_decrease[internal])
        return imp

    def to_dict(self):
        return {
            "criterion": self.criterion,
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node_samples": self.n_node_samples.tolist(),
            "impurity_decrease": self.impurity_decrease.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray([np.nan if t is None else t for t in d["threshold"]], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            value=np.asarray(d["value"], dtype=np.float64),
            n_node_samples=np.asarray(d["n_node_samples"], dtype=np.intp),
            impurity_decrease=np.asarray(d["impurity_decrease"], dtype=np.float64),
            criterion=d["criterion"],
        )


def train_tree(
    X,
    y,
    max_depth,
    min_samples_leaf=1,
    features_per_split=None,
    seed=0,
    sample_weights=None,
    criterion="gini",
):
    """Grow a greedy binary tree.

    ``criterion="gini"`` expects 0/1 labels and stores the weighted positive
    fraction in each leaf; ``"mse"`` fits real targets (boosting residuals)
    and stores the weighted mean. Rows with zero weight are ignored, and
    ``min_samples_leaf`` counts rows, not weight.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    w = np.ones(n) if sample_weights is None else np.ascontiguousarray(sample_weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("sample weights must be nonnegative")
    code = CRITERIA[criterion]
    k = d if features_per_split is None else min(int(features_per_split), d)
    rng = _random.derive_rng(seed) if k < d else None
    all_features = np.arange(d, dtype=np.intp)

    nodes = {"feature": [], "threshold": [], "left": [], "right": [], "value": [], "n": [], "dec": []}

    def new_node(idx):
        ws = w[idx]
        total_w = np.cumsum(ws)[-1]
        total_p = np.cumsum(ws * y[idx])[-1]
        nodes["feature"].append(-1)
        nodes["threshold"].append(np.nan)
        nodes["left"].append(-1)
        nodes["right"].append(-1)
        nodes["value"].append(total_p / total_w)
        nodes["n"].append(idx.shape[0])
        nodes["dec"].append(0.0)
        return len(nodes["feature"]) - 1, total_w, total_p

    def grow(idx, depth):
        node, total_w, total_p = new_node(idx)
        if depth >= max_depth or idx.shape[0] < 2 * min_samples_leaf:
            return node
        if code == kernels.GINI:
            parent = -(total_p * (total_w - total_p) / total_w)
        else:
            parent = total_p * total_p / total_w
        if code == kernels.GINI and parent == 0.0:
            return node  # pure
        feats = all_features if rng is None else np.sort(rng.choice(d, size=k, replace=False)).astype(np.intp)
        f, thr, score = kernels.best_split(X, y, w, idx, feats, min_samples_leaf, code)
        if f < 0 or not score > parent + 1e-12 * max(1.0, abs(parent)):
            return node
        go_left = X[idx, f] <= thr
        nodes["feature"][node] = int(f)
        nodes["threshold"][node] = float(thr)
        # weighted impurity decrease (gini: twice the score gain; mse: SSE drop)
        nodes["dec"][node] = (2.0 if code == kernels.GINI else 1.0) * (score - parent)
        nodes["left"][node] = grow(idx[go_left], depth + 1)
        nodes["right"][node] = grow(idx[~go_left], depth + 1)
        return node

    root_idx = np.flatnonzero(w > 0).astype(np.intp)
    if root_idx.size == 0:
        raise ValueError("no rows with positive weight")
    grow(root_idx, 0)
    return DecisionTree(
        feature=np.asarray(nodes["feature"], dtype=np.intp),
        threshold=np.asarray(nodes["threshold"], dtype=np.float64),
        left=np.asarray(nodes["left"], dtype=np.intp),
        right=np.asarray(nodes["right"], dtype=np.intp),
        value=np.asarray(nodes["value"], dtype=np.float64),
        n_node_samples=np.asarray(nodes["n"], dtype=np.intp),
        impurity_decrease=np.asarray(nodes["dec"], dtype=np.float64),
        criterion=criterion,
    )
