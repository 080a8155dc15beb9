"""Penalized logistic regression fitted by proximal gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import (
    LogRegParams,
    NonFinite,
    Standardizer,
    TrainedModel,
    TrainingSet,
    register,
    sigmoid,
)


def penalty_strength(c, n_rows):
    """Per-row penalty weight for inverse regularization strength ``c``.

    Matches minimizing ``c * sum(nll) + R(w)`` after dividing through by ``c * n``.
    """
    return 1.0 / (c * n_rows)


def smooth_loss_and_grad(weights, intercept, X, y, lam, penalty):
    """Mean negative log-likelihood plus the smooth part of the penalty.

    For ``penalty="l1"`` the returned loss and gradient exclude the L1 term,
    which is handled by the proximal step.
    """
    z = X @ weights + intercept
    # log(1 + e^z) - y*z, stable for both signs
    nll = np.logaddexp(0.0, z) - y * z
    resid = sigmoid(z) - y
    n = X.shape[0]
    loss = float(nll.mean())
    grad_w = X.T @ resid / n
    grad_b = float(resid.mean())
    if penalty == "l2":
        loss += 0.5 * lam * float(weights @ weights)
        grad_w = grad_w + lam * weights
    return loss, grad_w, grad_b


def objective(weights, intercept, X, y, lam, penalty):
    loss, _, _ = smooth_loss_and_grad(weights, intercept, X, y, lam, penalty)
    if penalty == "l1":
        loss += lam * float(np.abs(weights).sum())
    return loss


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@register
@dataclass
class LogisticModel(TrainedModel):
    kind = "logreg"

    weights: np.ndarray = None
    intercept: float = 0.0
    scaler: Standardizer = None

    def decision_function(self, X):
        return self.scaler.transform(X) @ self.weights + self.intercept

    def _raw_proba(self, X):
        return sigmoid(self.decision_function(X))

    def _state(self):
        return {
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "standardization": self.scaler.to_dict(),
        }

    @classmethod
    def _from_state(cls, state, **common):
        return cls(
            weights=np.asarray(state["weights"], dtype=np.float64),
            intercept=float(state["intercept"]),
            scaler=Standardizer.from_dict(state["standardization"]),
            **common,
        )


def train_logreg(data: TrainingSet, hp: LogRegParams = LogRegParams(), seed=0):
    """Fit by (proximal) gradient descent with a fixed step ``hp.learning_rate``.

    ``seed`` is accepted for interface symmetry; the fit is deterministic.
    The objective is checkpointed each iteration into ``training_history``.
    """
    scaler = Standardizer.fit(data.features)
    X = scaler.transform(data.features)
    y = data.labels.astype(np.float64)
    n, d = X.shape
    lam = penalty_strength(hp.c, n)
    step = hp.learning_rate

    w = np.zeros(d)
    b = 0.0
    history = [objective(w, b, X, y, lam, hp.penalty)]
    for _ in range(int(hp.max_iter)):
        _, gw, gb = smooth_loss_and_grad(w, b, X, y, lam, hp.penalty)
        w = w - step * gw
        b = b - step * gb
        if hp.penalty == "l1":
            w = soft_threshold(w, step * lam)
        loss = objective(w, b, X, y, lam, hp.penalty)
        if not np.isfinite(loss) or not np.all(np.isfinite(w)):
            raise NonFinite(f"logistic loss diverged (learning_rate={step})")
        history.append(loss)
        if abs(history[-2] - loss) < hp.tol:
            break
    return LogisticModel(
        feature_names=data.feature_names,
        hyperparams=hp,
        training_history=history,
        weights=w,
        intercept=float(b),
        scaler=scaler,
    )
