"""Shared pieces of the four classifiers: data contract, link function,
standardization, the predict-probability interface and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

FORMAT_VERSION = 1


class ModelError(Exception):
    pass


class NonFinite(ModelError):
    """Training loss or parameters stopped being finite."""


class ShapeMismatch(ModelError, ValueError):
    pass


class InvalidTrainingSet(ModelError, ValueError):
    pass


@dataclass(frozen=True)
class TrainingSet:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels).astype(bool)
        if X.ndim != 2:
            raise InvalidTrainingSet(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise InvalidTrainingSet(f"{y.shape[0]} labels for {X.shape[0]} rows")
        if X.shape[0] < 2:
            raise InvalidTrainingSet("need at least 2 rows")
        if not np.all(np.isfinite(X)):
            raise InvalidTrainingSet("features contain non-finite values")
        if y.all() or not y.any():
            raise InvalidTrainingSet("both label values must be present")
        names = tuple(self.feature_names)
        if len(names) != X.shape[1]:
            raise InvalidTrainingSet(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self):
        return self.features.shape[0]

    def subset(self, rows):
        return TrainingSet(self.features[rows], self.labels[rows], self.feature_names)


def sigmoid(z):
    """Logistic link, stable for large ``|z|``; scalar in, scalar out."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def log_loss(y, p, eps=1e-15):
    p = np.clip(p, eps, 1.0 - eps)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def base_log_odds(y):
    p = float(np.mean(y))
    return float(np.log(p / (1.0 - p)))


@dataclass(frozen=True)
class Standardizer:
    """Column mean/std fitted on training rows only; zero-variance columns keep std 1."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X):
        return (X - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def _positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not value > 0:
            raise ValueError(f"{type(obj).__name__}.{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class LogRegParams:
    penalty: str = "l2"
    c: float = 1.0
    learning_rate: float = 0.2
    max_iter: int = 5000
    tol: float = 1e-9

    def __post_init__(self):
        if self.penalty not in ("l1", "l2"):
            raise ValueError(f"penalty must be 'l1' or 'l2', got {self.penalty!r}")
        _positive(self, "c", "learning_rate", "max_iter", "tol")


@dataclass(frozen=True)
class GradientBoostingParams:
    learning_rate: float = 0.01
    max_depth: int = 3
    n_trees: int = 200
    min_samples_leaf: int = 1

    def __post_init__(self):
        # learning_rate 0 is allowed: it pins every prediction to the base rate
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        _positive(self, "max_depth", "n_trees", "min_samples_leaf")


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 100
    max_depth: int = 10
    min_samples_leaf: int = 4
    features_per_split: int | None = None  # None -> ceil(sqrt(D))
    bootstrap: bool = True

    def __post_init__(self):
        _positive(self, "n_trees", "max_depth", "min_samples_leaf")
        if self.features_per_split is not None:
            _positive(self, "features_per_split")


@dataclass(frozen=True)
class MlpParams:
    units_1: int = 128
    units_2: int = 64
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32

    def __post_init__(self):
        _positive(self, "units_1", "units_2", "learning_rate", "epochs", "batch_size")


PARAMS_BY_KIND = {
    "logreg": LogRegParams,
    "gradient_boosting": GradientBoostingParams,
    "random_forest": RandomForestParams,
    "mlp": MlpParams,
}


def make_params(kind, **overrides):
    cls = PARAMS_BY_KIND[kind]
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown {kind} hyperparameters: {sorted(unknown)}")
    return cls(**overrides)


_REGISTRY = {}


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


@dataclass
class TrainedModel:
    """Fitted classifier; subclasses implement ``_raw_proba`` and (de)serialization."""

    kind = "base"

    feature_names: tuple
    hyperparams: object
    threshold: float = 0.5
    training_history: list = field(default_factory=list, compare=False)

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ShapeMismatch(
                f"{self.kind} expects {len(self.feature_names)} columns, got shape {X.shape}"
            )
        return np.clip(self._raw_proba(X), 0.0, 1.0)

    def classify(self, X, threshold=None):
        t = self.threshold if threshold is None else threshold
        return self.predict_proba(X) >= t

    def _raw_proba(self, X):
        raise NotImplementedError

    def _state(self):
        raise NotImplementedError

    @classmethod
    def _from_state(cls, state, **common):
        raise NotImplementedError

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "hyperparameters": asdict(self.hyperparams),
            "feature_names": list(self.feature_names),
            "threshold": self.threshold,
            "parameters": self._state(),
        }


def model_from_dict(d):
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {d.get('format_version')!r}")
    cls = _REGISTRY[d["kind"]]
    hp = PARAMS_BY_KIND[d["kind"]](**d["hyperparameters"])
    return cls._from_state(
        d["parameters"],
        feature_names=tuple(d["feature_names"]),
        hyperparams=hp,
        threshold=float(d["threshold"]),
    )


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
