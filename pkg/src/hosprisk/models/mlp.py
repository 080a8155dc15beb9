"""Two-hidden-layer perceptron (ReLU, sigmoid output) trained by mini-batch
gradient descent on log-loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _random
from .base import MlpParams, NonFinite, Standardizer, TrainedModel, TrainingSet, register, sigmoid

LAYER_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


def init_params(sizes, rng):
    """Uniform Glorot initialisation; biases start at zero."""
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{i}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def zero_params(sizes):
    return {
        k: np.zeros((a, b)) if k.startswith("W") else np.zeros(b)
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1)
        for k in (f"W{i}", f"b{i}")
    }


def forward(params, X):
    """Return the output logits and the cache needed by :func:`backward`."""
    a1 = X @ params["W1"] + params["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ params["W2"] + params["b2"]
    h2 = np.maximum(a2, 0.0)
    z = (h2 @ params["W3"] + params["b3"])[:, 0]
    return z, (X, a1, h1, a2, h2)


def loss_and_grads(params, X, y):
    """Mean log-loss and its gradient with respect to every parameter."""
    z, (X, a1, h1, a2, h2) = forward(params, X)
    n = X.shape[0]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = ((sigmoid(z) - y) / n)[:, None]
    grads = {"W3": h2.T @ dz, "b3": dz.sum(axis=0)}
    da2 = (dz @ params["W3"].T) * (a2 > 0)
    grads["W2"] = h1.T @ da2
    grads["b2"] = da2.sum(axis=0)
    da1 = (da2 @ params["W2"].T) * (a1 > 0)
    grads["W1"] = X.T @ da1
    grads["b1"] = da1.sum(axis=0)
    return loss, grads


@register
@dataclass
class MlpModel(TrainedModel):
    kind = "mlp"

    params: dict = field(default_factory=dict)
    scaler: Standardizer = None

    def _raw_proba(self, X):
        z, _ = forward(self.params, self.scaler.transform(X))
        return sigmoid(z)

    def _state(self):
        return {
            "standardization": self.scaler.to_dict(),
            "layers": {k: self.params[k].tolist() for k in LAYER_NAMES},
        }

    @classmethod
    def _from_state(cls, state, **common):
        params = {k: np.asarray(v, dtype=np.float64) for k, v in state["layers"].items()}
        return cls(params=params, scaler=Standardizer.from_dict(state["standardization"]), **common)


def train_mlp(data: TrainingSet, hp: MlpParams = MlpParams(), seed=0):
    scaler = Standardizer.fit(data.features)
    X = scaler.transform(data.features)
    y = data.labels.astype(np.float64)
    n, d = X.shape
    params = init_params((d, hp.units_1, hp.units_2, 1), _random.derive_rng(seed, 0))
    order_rng = _random.derive_rng(seed, 1)
    history = []
    for epoch in range(hp.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            batch = order[start : start + hp.batch_size]
            _, grads = loss_and_grads(params, X[batch], y[batch])
            for k in LAYER_NAMES:
                params[k] -= hp.learning_rate * grads[k]
        z, _ = forward(params, X)
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        if not np.isfinite(loss):
            raise NonFinite(f"MLP loss diverged at epoch {epoch} (learning_rate={hp.learning_rate})")
        history.append(loss)
    return MlpModel(
        feature_names=data.feature_names,
        hyperparams=hp,
        training_history=history,
        params=params,
        scaler=scaler,
    )
