"""Windowed cohort features and inpatient labels.

Each patient is anchored at the date of their first encounter. Features come
from the observation window ``[index, index + observation_years)`` and the
label from the outcome window that follows it. A year is 365.25 days, so
shifting all of a patient's events by whole days changes no feature or label.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from datetime import date, datetime, time, timedelta
from typing import NamedTuple

import numpy as np

YEAR = timedelta(days=365.25)

FEATURE_NAMES = (
    "age",
    "gender_code",
    "acute_conditions",
    "chronic_conditions",
    "wellness_perc",
    "adherence_rate",
    "low_adherence",
    "expenses",
    "coverage",
)
GENDER_CODE = {"F": 0, "M": 1}


class EmptyCohort(Exception):
    pass


@dataclass(frozen=True)
class CohortConfig:
    observation_years: float = 5
    outcome_years: float = 5
    min_history_years: float = 10
    adherence_threshold: float = 0.80
    acute_resolution_days: float = 90
    assumed_days_per_dispense: float = 30

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"CohortConfig.{f.name} must be > 0")
        if self.observation_years + self.outcome_years > self.min_history_years:
            raise ValueError("observation_years + outcome_years must not exceed min_history_years")

    @property
    def horizon_years(self):
        return self.observation_years + self.outcome_years


@dataclass(frozen=True)
class CohortRow:
    patient_id: str
    index_date: date
    age: int
    gender_code: int
    acute_conditions: int
    chronic_conditions: int
    wellness_perc: float
    adherence_rate: float | None
    low_adherence: bool
    expenses: float
    coverage: float
    label_inpatient: bool

    def feature_vector(self):
        """Matrix row; an absent adherence rate is imputed as 1.0."""
        rate = 1.0 if self.adherence_rate is None else self.adherence_rate
        return [
            float(self.age),
            float(self.gender_code),
            float(self.acute_conditions),
            float(self.chronic_conditions),
            self.wellness_perc,
            rate,
            float(self.low_adherence),
            self.expenses,
            self.coverage,
        ]


class FeatureMatrix(NamedTuple):
    rows: tuple
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple


def _midnight(d):
    return datetime.combine(d, time())


def _years(n):
    return n * YEAR


def _events(dataset, patient_id):
    return dataset.by_patient[patient_id]


def compute_index_date(patient, dataset):
    """Date of the patient's earliest encounter, or ``None`` without encounters."""
    pid = patient if isinstance(patient, str) else patient.id
    encounters = _events(dataset, pid).encounters
    if not encounters:
        return None
    return min(e.start for e in encounters).date()


def age_at(birth_date, on_date):
    """Completed 365.25-day years between two dates (never negative)."""
    days = (on_date - birth_date).days
    return max(0, (4 * days) // 1461)


def last_event(encounters):
    return max(max(e.start, e.stop or e.start) for e in encounters)


def filter_eligible(dataset, cfg=CohortConfig()):
    """``(patient_id, index_date)`` pairs, ascending by id, for patients whose
    encounter span reaches ``min_history_years`` and who are alive through the
    whole observation + outcome horizon."""
    kept = []
    for pid in sorted(dataset.by_patient):
        ev = dataset.by_patient[pid]
        if not ev.encounters:
            continue
        index = compute_index_date(pid, dataset)
        start = _midnight(index)
        if last_event(ev.encounters) - start < _years(cfg.min_history_years):
            continue
        death = ev.patient.death_date
        if death is not None and _midnight(death) < start + _years(cfg.horizon_years):
            continue
        kept.append((pid, index))
    return kept


def _observation_window(index_date, cfg):
    start = _midnight(index_date)
    return start, start + _years(cfg.observation_years)


def compute_wellness_perc(patient_id, index_date, dataset, cfg=CohortConfig()):
    lo, hi = _observation_window(index_date, cfg)
    visits = sum(
        1 for e in _events(dataset, patient_id).encounters if e.encounter_class == "wellness" and lo <= e.start < hi
    )
    return min(visits / cfg.observation_years, 1.0)


def compute_adherence(patient_id, index_date, dataset, cfg=CohortConfig()):
    """``(rate or None, low_adherence)`` from dispenses against expected refills.

    Expected refills per prescription are ``ceil(duration / days_per_dispense)``,
    at least one; open-ended prescriptions run to the window end.
    """
    lo, hi = _observation_window(index_date, cfg)
    dispensed = 0
    expected = 0
    for m in _events(dataset, patient_id).medications:
        if not lo <= m.start < hi:
            continue
        stop = m.stop if m.stop is not None else hi
        days = (stop - m.start).total_seconds() / 86400.0
        expected += max(1, math.ceil(days / cfg.assumed_days_per_dispense))
        dispensed += m.dispenses
    if expected == 0:
        return None, False
    rate = min(1.0, dispensed / expected)
    return rate, rate < cfg.adherence_threshold


def classify_conditions(patient_id, index_date, dataset, cfg=CohortConfig()):
    """``(acute, chronic)`` counts of conditions starting in the observation window.

    Resolved within ``acute_resolution_days`` counts as acute; unresolved or
    longer-lasting counts as chronic.
    """
    lo, hi = _observation_window(index_date, cfg)
    acute = chronic = 0
    for c in _events(dataset, patient_id).conditions:
        if not lo <= _midnight(c.start) < hi:
            continue
        if c.stop is not None and (c.stop - c.start).days <= cfg.acute_resolution_days:
            acute += 1
        else:
            chronic += 1
    return acute, chronic


def compute_label(patient_id, index_date, dataset, cfg=CohortConfig()):
    """True iff an inpatient encounter starts inside the outcome window."""
    _, lo = _observation_window(index_date, cfg)
    hi = lo + _years(cfg.outcome_years)
    return any(
        e.encounter_class == "inpatient" and lo <= e.start < hi for e in _events(dataset, patient_id).encounters
    )


def build_row(patient_id, index_date, dataset, cfg=CohortConfig()):
    patient = dataset.patient(patient_id)
    acute, chronic = classify_conditions(patient_id, index_date, dataset, cfg)
    rate, low = compute_adherence(patient_id, index_date, dataset, cfg)
    return CohortRow(
        patient_id=patient_id,
        index_date=index_date,
        age=age_at(patient.birth_date, index_date),
        gender_code=GENDER_CODE[patient.gender],
        acute_conditions=acute,
        chronic_conditions=chronic,
        wellness_perc=compute_wellness_perc(patient_id, index_date, dataset, cfg),
        adherence_rate=rate,
        low_adherence=low,
        expenses=patient.healthcare_expenses,
        coverage=patient.healthcare_coverage,
        label_inpatient=compute_label(patient_id, index_date, dataset, cfg),
    )


def rows_to_matrix(rows):
    rows = tuple(rows)
    if not rows:
        raise EmptyCohort("no eligible patients")
    X = np.array([r.feature_vector() for r in rows], dtype=np.float64)
    y = np.array([r.label_inpatient for r in rows], dtype=bool)
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    return FeatureMatrix(rows, X, y, FEATURE_NAMES)


def build_feature_matrix(dataset, cfg=CohortConfig()):
    """One row per eligible patient in ascending ``patient_id`` order."""
    eligible = filter_eligible(dataset, cfg)
    if not eligible:
        raise EmptyCohort("no patient satisfies the history requirement")
    return rows_to_matrix(build_row(pid, idx, dataset, cfg) for pid, idx in eligible)


COHORT_CSV_HEADER = ("patient_id", "index_date", *FEATURE_NAMES, "adherence_observed", "label_inpatient")


def write_cohort_csv(path, fm):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COHORT_CSV_HEADER)
        for row, x in zip(fm.rows, fm.X):
            w.writerow(
                [row.patient_id, row.index_date.isoformat()]
                + [repr(float(v)) for v in x]
                + [int(row.adherence_rate is not None), int(row.label_inpatient)]
            )


def read_cohort_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(COHORT_CSV_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"cohort CSV lacks columns {sorted(missing)}")
        for rec in reader:
            observed = rec["adherence_observed"] == "1"
            rows.append(
                CohortRow(
                    patient_id=rec["patient_id"],
                    index_date=date.fromisoformat(rec["index_date"]),
                    age=int(float(rec["age"])),
                    gender_code=int(float(rec["gender_code"])),
                    acute_conditions=int(float(rec["acute_conditions"])),
                    chronic_conditions=int(float(rec["chronic_conditions"])),
                    wellness_perc=float(rec["wellness_perc"]),
                    adherence_rate=float(rec["adherence_rate"]) if observed else None,
                    low_adherence=float(rec["low_adherence"]) == 1.0,
                    expenses=float(rec["expenses"]),
                    coverage=float(rec["coverage"]),
                    label_inpatient=rec["label_inpatient"] == "1",
                )
            )
    return rows_to_matrix(rows)
