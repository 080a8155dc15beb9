"""Permutation importance, its subgroup breakdown, and counterfactual risk shifts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _random
from ..models import ShapeMismatch


class EmptyBin(ValueError):
    pass


class NoHighRiskRows(ValueError):
    pass


@dataclass(frozen=True)
class ImportanceTable:
    feature_names: tuple
    raw: np.ndarray  # mean accuracy drop, may be negative
    std: np.ndarray
    baseline: float

    @property
    def scores(self):
        return np.maximum(self.raw, 0.0)

    def ranked(self):
        """``(name, score, raw)`` sorted by score, descending; ties keep column order."""
        order = sorted(range(len(self.feature_names)), key=lambda i: (-self.scores[i], i))
        return [(self.feature_names[i], float(self.scores[i]), float(self.raw[i])) for i in order]

    def __getitem__(self, name):
        return float(self.scores[self.feature_names.index(name)])

    def to_dict(self):
        return {
            "baseline_accuracy": self.baseline,
            "features": [{"feature": n, "importance": s, "raw": r} for n, s, r in self.ranked()],
        }


def _check(model, X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names) or X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"data of shape {X.shape} with {y.shape[0]} labels does not fit {model.kind}")
    return X, y


def _resolve(model, feature):
    if isinstance(feature, str):
        return list(model.feature_names).index(feature)
    return int(feature)


def feature_drops(model, X, y, column, repeats, seed, rows=None):
    """Accuracy drop for each of ``repeats`` shuffles of one column.

    With ``rows`` given, only those rows are scored and the column is shuffled
    among them. Shuffle ``r`` of column ``j`` is keyed on ``(seed, j, r)``.
    """
    if rows is not None:
        X, y = X[rows], y[rows]
    base = float(np.mean(model.classify(X) == y))
    drops = np.empty(repeats)
    Xp = X.copy()
    for r in range(repeats):
        perm = _random.derive_rng(seed, column, r).permutation(X.shape[0])
        Xp[:, column] = X[perm, column]
        drops[r] = base - float(np.mean(model.classify(Xp) == y))
    return drops, base


def permutation_importance(model, X, y, repeats=10, seed=0):
    X, y = _check(model, X, y)
    raw, std = [], []
    base = float(np.mean(model.classify(X) == y))
    for j in range(X.shape[1]):
        drops, _ = feature_drops(model, X, y, j, repeats, seed)
        raw.append(drops.mean())
        std.append(drops.std())
    return ImportanceTable(tuple(model.feature_names), np.array(raw), np.array(std), base)


def impurity_importance(model):
    """Normalized impurity decrease for tree ensembles, ``None`` for other kinds."""
    if not hasattr(model, "feature_importances"):
        return None
    imp = model.feature_importances()
    return {n: float(v) for n, v in zip(model.feature_names, imp)}


@dataclass(frozen=True)
class SubgroupBin:
    lo: float
    hi: float
    n: int
    importance: float | None
    raw: float | None
    reliable: bool

    @property
    def label(self):
        hi = "inf" if np.isinf(self.hi) else f"{self.hi:g}"
        lo = "-inf" if np.isinf(self.lo) else f"{self.lo:g}"
        return f"[{lo}, {hi})"

    def to_dict(self):
        return {
            "bin": self.label,
            "lo": None if np.isinf(self.lo) else self.lo,
            "hi": None if np.isinf(self.hi) else self.hi,
            "n": self.n,
            "importance": self.importance,
            "raw": self.raw,
            "reliable": self.reliable,
        }


def _as_intervals(bins):
    bins = list(bins)
    if bins and not isinstance(bins[0], (tuple, list)):
        return [(float(a), float(b)) for a, b in zip(bins[:-1], bins[1:])]
    return [(float(a), float(b)) for a, b in bins]


def subgroup_importance(model, X, y, target, grouping, bins, repeats=10, seed=0, min_bin_size=10):
    """Permutation importance of ``target`` computed separately in each
    ``[lo, hi)`` bin of ``grouping``. ``bins`` is a list of edges or of pairs.

    Bins smaller than ``min_bin_size`` are still reported but marked unreliable.
    """
    X, y = _check(model, X, y)
    tcol = _resolve(model, target)
    gcol = _resolve(model, grouping)
    intervals = _as_intervals(bins)
    if not intervals:
        raise EmptyBin("no bins given")
    out = []
    for lo, hi in intervals:
        rows = np.flatnonzero((X[:, gcol] >= lo) & (X[:, gcol] < hi))
        if rows.size == 0:
            out.append(SubgroupBin(lo, hi, 0, None, None, False))
            continue
        drops, _ = feature_drops(model, X, y, tcol, repeats, seed, rows=rows)
        raw = float(drops.mean())
        out.append(SubgroupBin(lo, hi, int(rows.size), max(raw, 0.0), raw, rows.size >= min_bin_size))
    if not any(b.reliable for b in out):
        raise EmptyBin(f"every bin of {grouping!r} has fewer than {min_bin_size} rows")
    return out


def counterfactual_effect(model, X, feature, baseline_value, treated_value, threshold=None):
    """Relative drop in mean predicted risk, ``1 - mean(p | treated) / mean(p | baseline)``,
    over the rows classified high-risk at their observed values."""
    X = np.asarray(X, dtype=np.float64)
    col = _resolve(model, feature)
    high = model.classify(X, threshold)
    if not high.any():
        raise NoHighRiskRows("no rows are classified high-risk")
    Xh = X[high]
    Xb = Xh.copy()
    Xb[:, col] = baseline_value
    Xt = Xh.copy()
    Xt[:, col] = treated_value
    pb = float(model.predict_proba(Xb).mean())
    pt = float(model.predict_proba(Xt).mean())
    if pb == 0.0:
        raise ValueError("baseline mean risk is zero; relative reduction undefined")
    return 1.0 - pt / pb
