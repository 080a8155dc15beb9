from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self):
        return self.tp + self.fp + self.fn + self.tn

    @property
    def n_flagged(self):
        return self.tp + self.fp

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_confusion(cls, cm):
        accuracy = (cm.tp + cm.tn) / cm.n
        precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
        recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(accuracy, precision, recall, f1)

    def to_dict(self):
        return asdict(self)


def confusion_matrix(predicted, actual):
    p = np.asarray(predicted).astype(bool)
    a = np.asarray(actual).astype(bool)
    if p.shape != a.shape:
        raise LengthMismatch(f"{p.size} predictions for {a.size} labels")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    return ConfusionMatrix(
        tp=int(np.sum(p & a)),
        fp=int(np.sum(p & ~a)),
        fn=int(np.sum(~p & a)),
        tn=int(np.sum(~p & ~a)),
    )


def compute_metrics(predicted, actual):
    """Confusion counts and accuracy/precision/recall/F1 (empty ratios are 0)."""
    cm = confusion_matrix(predicted, actual)
    return cm, MetricSet.from_confusion(cm)


def accuracy(predicted, actual):
    p = np.asarray(predicted).astype(bool)
    a = np.asarray(actual).astype(bool)
    if p.shape != a.shape:
        raise LengthMismatch(f"{p.size} predictions for {a.size} labels")
    return float(np.mean(p == a))
