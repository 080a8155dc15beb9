"""Gradient boosting on logistic loss with regression-tree stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _random
from .base import (
    GradientBoostingParams,
    TrainedModel,
    TrainingSet,
    base_log_odds,
    log_loss,
    register,
    sigmoid,
)
from .tree import DecisionTree, train_tree


@register
@dataclass
class GradientBoostingModel(TrainedModel):
    kind = "gradient_boosting"

    init_score: float = 0.0
    trees: list = field(default_factory=list)

    def decision_function(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        f = np.full(X.shape[0], self.init_score)
        lr = self.hyperparams.learning_rate
        for tree in self.trees:
            f += lr * tree.predict(X)
        return f

    def _raw_proba(self, X):
        return sigmoid(self.decision_function(X))

    def feature_importances(self):
        imp = np.zeros(len(self.feature_names))
        for tree in self.trees:
            imp += tree.feature_importances(imp.shape[0])
        total = imp.sum()
        return imp / total if total > 0 else imp

    def _state(self):
        return {"init_score": self.init_score, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_state(cls, state, **common):
        return cls(
            init_score=float(state["init_score"]),
            trees=[DecisionTree.from_dict(t) for t in state["trees"]],
            **common,
        )


def train_gradient_boosting(data: TrainingSet, hp: GradientBoostingParams = GradientBoostingParams(), seed=0):
    """Stagewise fit: start at the base-rate log-odds, then each stage fits a
    regression tree to the residuals ``y - p`` and adds ``learning_rate`` times it.

    Per-stage training log-loss goes to ``training_history`` (index 0 is the
    base-rate loss).
    """
    X = data.features
    y = data.labels.astype(np.float64)
    f0 = base_log_odds(y)
    f = np.full(X.shape[0], f0)
    history = [log_loss(y, sigmoid(f))]
    trees = []
    for stage in range(hp.n_trees):
        resid = y - sigmoid(f)
        tree = train_tree(
            X,
            resid,
            max_depth=hp.max_depth,
            min_samples_leaf=hp.min_samples_leaf,
            seed=int(_random.derive_rng(seed, stage).integers(2**31)),
            criterion="mse",
        )
        trees.append(tree)
        f = f + hp.learning_rate * tree.predict(X)
        history.append(log_loss(y, sigmoid(f)))
    return GradientBoostingModel(
        feature_names=data.feature_names,
        hyperparams=hp,
        training_history=history,
        init_score=f0,
        trees=trees,
    )
