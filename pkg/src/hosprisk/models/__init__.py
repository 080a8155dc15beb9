"""From-scratch classifiers behind one ``predict_proba`` contract."""

from .base import (
    GradientBoostingParams,
    InvalidTrainingSet,
    LogRegParams,
    MlpParams,
    ModelError,
    NonFinite,
    RandomForestParams,
    ShapeMismatch,
    TrainedModel,
    TrainingSet,
    load_model,
    make_params,
    model_from_dict,
    save_model,
    sigmoid,
)
from .boosting import GradientBoostingModel, train_gradient_boosting
from .forest import RandomForestModel, train_random_forest
from .logreg import LogisticModel, train_logreg
from .mlp import MlpModel, train_mlp
from .tree import DecisionTree, gini, train_tree

MODEL_KINDS = ("logreg", "gradient_boosting", "random_forest", "mlp")

ALIASES = {
    "lr": "logreg",
    "logistic": "logreg",
    "gb": "gradient_boosting",
    "gbm": "gradient_boosting",
    "rf": "random_forest",
    "ann": "mlp",
}

_TRAINERS = {
    "logreg": train_logreg,
    "gradient_boosting": train_gradient_boosting,
    "random_forest": train_random_forest,
    "mlp": train_mlp,
}


def canonical_kind(name):
    kind = ALIASES.get(name, name)
    if kind not in _TRAINERS:
        raise ValueError(f"unknown model kind {name!r}; expected one of {MODEL_KINDS}")
    return kind


def train(kind, data, hp=None, seed=0):
    """Train any of the four kinds; ``hp`` may be a params object or a dict of overrides."""
    kind = canonical_kind(kind)
    if hp is None:
        hp = make_params(kind)
    elif isinstance(hp, dict):
        hp = make_params(kind, **hp)
    return _TRAINERS[kind](data, hp, seed)


def predict_proba(model, X):
    return model.predict_proba(X)
