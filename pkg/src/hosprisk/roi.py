"""Preventive-care return on investment for a model's flagged population.

Every flagged patient is assumed to attend wellness exams for five years
(the preventive cost). Savings accrue only on flagged patients who really
are hospitalized, at the expected avoided cost ``risk_reduction *
avg_hospitalization_cost`` each, so ``roi = precision * risk_reduction *
avg_hospitalization_cost / preventive_cost_5yr - 1``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .evaluation.metrics import MetricSet, confusion_matrix


class ZeroCost(ValueError):
    pass


@dataclass(frozen=True)
class CostAssumptions:
    preventive_cost_5yr: float = 2580.0
    avg_hospitalization_cost: float = 10924.0
    risk_reduction: float = 0.377

    def __post_init__(self):
        if not self.preventive_cost_5yr > 0:
            raise ValueError("preventive_cost_5yr must be > 0")
        if not self.avg_hospitalization_cost > 0:
            raise ValueError("avg_hospitalization_cost must be > 0")
        # 0 is allowed so a "no effect" scenario can be priced
        if not 0.0 <= self.risk_reduction < 1.0:
            raise ValueError("risk_reduction must lie in [0, 1)")

    @property
    def savings_per_true_positive(self):
        return self.risk_reduction * self.avg_hospitalization_cost

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RoiReport:
    model_kind: str
    n_flagged: int
    n_true_positive: int
    predicted_savings: float
    preventive_cost_total: float
    roi: float | None  # None when nobody is flagged

    def to_dict(self):
        return asdict(self)


def roi_formula(predicted_savings, preventive_cost):
    """``(savings - cost) / cost``."""
    if preventive_cost == 0:
        raise ZeroCost("preventive cost is zero")
    return (predicted_savings - preventive_cost) / preventive_cost


def roi_from_counts(n_flagged, n_true_positive, costs=CostAssumptions(), model_kind="", hosp_costs=None):
    """ROI from flag counts; ``hosp_costs`` optionally replaces the average with
    per-patient hospitalization costs of the true positives."""
    if n_true_positive > n_flagged:
        raise ValueError("more true positives than flagged rows")
    if hosp_costs is None:
        savings = n_true_positive * costs.savings_per_true_positive
    else:
        savings = costs.risk_reduction * float(np.sum(hosp_costs))
    cost = n_flagged * costs.preventive_cost_5yr
    roi = roi_formula(savings, cost) if n_flagged else None
    return RoiReport(model_kind, int(n_flagged), int(n_true_positive), float(savings), float(cost), roi)


def roi_from_confusion(cm, costs=CostAssumptions(), model_kind=""):
    return roi_from_counts(cm.tp + cm.fp, cm.tp, costs, model_kind)


def cohort_roi(model, X, y, costs=CostAssumptions(), hosp_costs=None, threshold=None):
    """ROI of offering preventive care to everyone ``model`` flags in ``X``.

    ``hosp_costs`` (per row) replaces the average hospitalization cost when given.
    """
    flags = model.classify(X, threshold)
    y = np.asarray(y).astype(bool)
    tp_rows = flags & y
    per_patient = None if hosp_costs is None else np.asarray(hosp_costs, dtype=np.float64)[tp_rows]
    return roi_from_counts(int(flags.sum()), int(tp_rows.sum()), costs, getattr(model, "kind", ""), per_patient)


@dataclass(frozen=True)
class SensitivityPoint:
    threshold: float
    metrics: MetricSet
    n_flagged: int
    roi: float | None
    missed_savings: float

    def to_row(self):
        return {
            "threshold": self.threshold,
            "precision": self.metrics.precision,
            "recall": self.metrics.recall,
            "roi": self.roi,
            "missed_savings": self.missed_savings,
        }


def roi_sensitivity(model, X, y, costs=CostAssumptions(), thresholds=None):
    """Metrics, ROI and missed savings (false negatives times expected avoided
    cost) at each probability cutoff."""
    if thresholds is None:
        thresholds = np.round(np.arange(0.05, 1.0, 0.05), 2)
    thresholds = [float(t) for t in thresholds]
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly ascending")
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in [0, 1]")
    p = model.predict_proba(X)
    y = np.asarray(y).astype(bool)
    out = []
    for t in thresholds:
        flags = p >= t
        cm = confusion_matrix(flags, y)
        report = roi_from_confusion(cm, costs, getattr(model, "kind", ""))
        out.append(
            SensitivityPoint(
                threshold=t,
                metrics=MetricSet.from_confusion(cm),
                n_flagged=cm.n_flagged,
                roi=report.roi,
                missed_savings=cm.fn * costs.savings_per_true_positive,
            )
        )
    return out
