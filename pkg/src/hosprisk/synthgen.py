"""Synthea-shaped corpus generator with a planted risk model.

Latent patient features are drawn from a Gaussian copula whose pairwise
correlations are calibrated so that the *extracted* cohort features hit the
requested Pearson targets. Each eligible patient's features are then written
out as concrete events (wellness visits, condition episodes, prescriptions
with dispense counts) placed so that :mod:`hosprisk.cohort` recovers them
exactly. The only residual randomness in the cohort is the outcome draw from
the planted logistic model. Everything is recorded in a manifest.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import os
import uuid
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np
from scipy import special, stats

from . import _random
from .cohort import FEATURE_NAMES
from .ingest import SCHEMAS, TABLE_NAMES

MANIFEST_VERSION = 1
MANIFEST_FILE = "manifest.json"

DAY = timedelta(days=1)
OBS_DAYS = 1826  # whole days inside the 5 x 365.25-day observation window
HORIZON_DAYS = 3652  # whole days inside the 10-year horizon

PAPER_CORRELATIONS = (
    ("age", "acute_conditions", -0.59),
    ("age", "wellness_perc", -0.27),
    ("chronic_conditions", "acute_conditions", -0.28),
    ("gender_code", "low_adherence", -0.17),
)

DEFAULT_EFFECTS = {
    "age": 0.09,
    "gender_code": 0.4,
    "acute_conditions": 1.3,
    "chronic_conditions": 0.9,
    "wellness_perc": -2.5,
    "low_adherence": 1.5,
}

# latent copula coordinates; both adherence features share one latent
LATENTS = ("age", "gender", "acute", "chronic", "wellness", "adherence", "expenses", "coverage")
LATENT_OF = {
    "age": "age",
    "gender_code": "gender",
    "acute_conditions": "acute",
    "chronic_conditions": "chronic",
    "wellness_perc": "wellness",
    "wellness_visits": "wellness",
    "adherence_rate": "adherence",
    "low_adherence": "adherence",
    "expenses": "expenses",
    "coverage": "coverage",
}

# yearly wellness visit counts 0..6 in the observation window
WELLNESS_PMF = (0.14, 0.16, 0.16, 0.16, 0.14, 0.18, 0.06)
ADHERENCE_BETA = (7.0, 1.3)
ACUTE_MEAN = 1.2
CHRONIC_MEAN = 2.0
MAX_AGE = 84

ROUTINE_CLASSES = ("ambulatory", "outpatient", "emergency", "urgentcare")
CLASS_COST = {
    "wellness": 136.8,
    "ambulatory": 129.2,
    "outpatient": 312.5,
    "emergency": 1250.0,
    "urgentcare": 185.0,
    "inpatient": 10924.0,
}


class InfeasibleCorrelations(ValueError):
    pass


@dataclass(frozen=True)
class InteractionTerm:
    """Multiply the effect of ``feature`` by ``multiplier`` when ``modifier >= min_value``."""

    feature: str
    modifier: str
    min_value: float
    multiplier: float


@dataclass(frozen=True)
class GeneratorConfig:
    n_patients: int = 1171
    seed: int = 7
    target_correlations: tuple = PAPER_CORRELATIONS
    effect_log_odds: dict = field(default_factory=lambda: dict(DEFAULT_EFFECTS))
    interaction_terms: tuple = ()
    base_rate: float = 0.35
    history_years_range: tuple = (10.5, 20.0)
    ineligible_fraction: float = 0.1
    no_medication_rate: float = 0.05
    aux_scale: float = 1.0
    start_year_range: tuple = (1985, 2005)

    def __post_init__(self):
        if self.n_patients < 0:
            raise ValueError("n_patients must be >= 0")
        if not 0.0 < self.base_rate < 1.0:
            raise ValueError("base_rate must lie in (0, 1)")
        lo, hi = self.history_years_range
        if not 10.0 < lo <= hi:
            raise ValueError("history_years_range must satisfy 10 < lo <= hi")
        if not 0.0 <= self.ineligible_fraction < 1.0:
            raise ValueError("ineligible_fraction must lie in [0, 1)")
        if not 0.0 <= self.no_medication_rate < 1.0:
            raise ValueError("no_medication_rate must lie in [0, 1)")
        if self.aux_scale < 0:
            raise ValueError("aux_scale must be >= 0")
        pairs = []
        for a, b, r in self.target_correlations:
            if a not in LATENT_OF or b not in LATENT_OF:
                raise ValueError(f"unknown feature in correlation target ({a}, {b})")
            if not -1.0 <= r <= 1.0:
                raise ValueError(f"correlation target {r} outside [-1, 1]")
            key = frozenset((LATENT_OF[a], LATENT_OF[b]))
            if len(key) < 2 or key in pairs:
                raise InfeasibleCorrelations(f"target ({a}, {b}) conflicts with another target")
            pairs.append(key)
        for name in self.effect_log_odds:
            if name not in FEATURE_NAMES:
                raise ValueError(f"unknown feature in effect_log_odds: {name}")
        object.__setattr__(
            self,
            "interaction_terms",
            tuple(t if isinstance(t, InteractionTerm) else InteractionTerm(**t) for t in self.interaction_terms),
        )
        object.__setattr__(self, "target_correlations", tuple(tuple(t) for t in self.target_correlations))
        object.__setattr__(self, "history_years_range", tuple(self.history_years_range))
        object.__setattr__(self, "start_year_range", tuple(self.start_year_range))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "interaction_terms" in d:
            d["interaction_terms"] = tuple(InteractionTerm(**t) if isinstance(t, dict) else t for t in d["interaction_terms"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["target_correlations"] = [list(t) for t in self.target_correlations]
        d["history_years_range"] = list(self.history_years_range)
        d["start_year_range"] = list(self.start_year_range)
        d["interaction_terms"] = [asdict(t) for t in self.interaction_terms]
        return d


# --- marginals and copula calibration ---------------------------------------------


def _wellness_visits(u):
    cdf = np.cumsum(WELLNESS_PMF)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(WELLNESS_PMF) - 1)


def _poisson_quantile(u, mean, cap):
    """Exact Poisson quantile by table lookup, capped at ``cap``."""
    cdf = stats.poisson.cdf(np.arange(cap + 1), mean)
    return np.minimum(np.searchsorted(cdf, u, side="left"), cap).astype(float)


def _marginal(name, z, u, has_meds):
    """One materialized feature from its latent normal ``z`` and ``u = ndtr(z)``."""
    if name == "age":
        return np.minimum(np.floor(u * (MAX_AGE + 1)), MAX_AGE)
    if name == "gender_code":
        return (u >= 0.5).astype(float)
    if name == "acute_conditions":
        return _poisson_quantile(u, ACUTE_MEAN, 8)
    if name == "chronic_conditions":
        return _poisson_quantile(u, CHRONIC_MEAN, 10)
    if name == "wellness_visits":
        return _wellness_visits(u)
    if name == "wellness_perc":
        return np.minimum(_wellness_visits(u) / 5.0, 1.0)
    if name == "adherence_rate":
        rate = np.clip(special.betaincinv(*ADHERENCE_BETA, u), 0.05, 1.0)
        return np.where(has_meds, rate, 1.0)
    if name == "low_adherence":
        # rate < 0.8 without evaluating the quantile function
        return (has_meds & (u < special.betainc(*ADHERENCE_BETA, 0.8))).astype(float)
    if name == "expenses":
        return np.round(np.exp(10.8 + 0.9 * z), 2)
    if name == "coverage":
        return np.round(np.exp(8.9 + 1.1 * z), 2)
    raise KeyError(name)


MATERIALIZED = (*FEATURE_NAMES, "wellness_visits")


def materialize_latents(z, has_meds=None):
    """Map latent normals (columns in :data:`LATENTS` order) to target feature values.

    Adherence is the continuous target here; the written corpus quantizes it
    to a ratio of dispense counts.
    """
    has_meds = np.ones(z.shape[0], dtype=bool) if has_meds is None else has_meds
    out = {}
    for name in MATERIALIZED:
        col = z[:, LATENTS.index(LATENT_OF[name])]
        out[name] = _marginal(name, col, special.ndtr(col), has_meds)
    return out


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else 0.0


@functools.lru_cache(maxsize=64)
def calibrate_pair(feature_a, feature_b, target, no_medication_rate=0.0, n=200_000, iters=30):
    """Latent correlation giving the requested Pearson value between two
    materialized features (common random numbers, bisection)."""
    rng = np.random.default_rng(20240611)
    base = rng.standard_normal((n, 2))
    has_meds = rng.random(n) >= no_medication_rate
    za, e = base[:, 0], base[:, 1]
    fa = _marginal(feature_a, za, special.ndtr(za), has_meds)

    def realized(rho):
        zb = rho * za + math.sqrt(1.0 - rho * rho) * e
        return _pearson(fa, _marginal(feature_b, zb, special.ndtr(zb), has_meds))

    lo, hi = -0.995, 0.995
    r_lo, r_hi = realized(lo), realized(hi)
    if not min(r_lo, r_hi) <= target <= max(r_lo, r_hi):
        raise InfeasibleCorrelations(
            f"corr({feature_a}, {feature_b}) = {target} is outside the attainable range [{r_lo:.3f}, {r_hi:.3f}]"
        )
    rising = r_hi >= r_lo  # low_adherence falls as its latent rises
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (realized(mid) < target) == rising:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def latent_correlation_matrix(cfg):
    sigma = np.eye(len(LATENTS))
    for a, b, r in cfg.target_correlations:
        rho = calibrate_pair(a, b, r, cfg.no_medication_rate)
        i, j = LATENTS.index(LATENT_OF[a]), LATENTS.index(LATENT_OF[b])
        sigma[i, j] = sigma[j, i] = rho
    if np.linalg.eigvalsh(sigma).min() <= 1e-8:
        raise InfeasibleCorrelations("calibrated latent correlation matrix is not positive definite")
    return sigma


# --- planted outcome model ------------------------------------------------------------


def _logit_without_intercept(X, names, effects, interactions):
    col = {n: i for i, n in enumerate(names)}
    eta = np.zeros(X.shape[0])
    for name, beta in effects.items():
        eta += beta * X[:, col[name]]
    for t in interactions:
        beta = effects.get(t.feature, 0.0)
        active = X[:, col[t.modifier]] >= t.min_value
        eta += (t.multiplier - 1.0) * beta * X[:, col[t.feature]] * active
    return eta


def solve_intercept(eta, base_rate):
    """Intercept making the mean planted probability equal ``base_rate``."""
    if eta.size == 0:
        return float(special.logit(base_rate))
    lo, hi = -60.0, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if special.expit(mid + eta).mean() < base_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- manifest ---------------------------------------------------------------------------


@dataclass
class PatientTruth:
    id: str
    eligible: bool
    first_encounter: str  # ISO date; the cohort index date
    ineligible_reason: str | None = None
    features: dict | None = None  # matrix values for eligible patients
    adherence_observed: bool | None = None
    true_probability: float | None = None
    label: bool | None = None


@dataclass
class Manifest:
    config: dict
    counts: dict
    intercept: float
    effects: dict
    interactions: list
    patients: list

    @property
    def eligible_ids(self):
        return sorted(p.id for p in self.patients if p.eligible)

    def patient(self, pid):
        for p in self.patients:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def true_probability(self, X, feature_names=FEATURE_NAMES):
        """Planted outcome probability for feature rows (any counterfactual values)."""
        X = np.asarray(X, dtype=np.float64)
        terms = [InteractionTerm(**t) for t in self.interactions]
        return special.expit(self.intercept + _logit_without_intercept(X, list(feature_names), self.effects, terms))

    def to_dict(self):
        return {
            "format_version": MANIFEST_VERSION,
            "config": self.config,
            "counts": self.counts,
            "intercept": self.intercept,
            "effects": self.effects,
            "interactions": self.interactions,
            "eligible_ids": self.eligible_ids,
            "patients": [asdict(p) for p in self.patients],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {d.get('format_version')!r}")
        return cls(
            config=d["config"],
            counts=d["counts"],
            intercept=d["intercept"],
            effects=d["effects"],
            interactions=d["interactions"],
            patients=[PatientTruth(**p) for p in d["patients"]],
        )

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# --- record emission -------------------------------------------------------------------


def _ts(dt):
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _money(x):
    return f"{x:.2f}"


class _Writer:
    """Row buffers for all eleven tables, in ingest column order."""

    def __init__(self):
        self.rows = {t: [] for t in TABLE_NAMES}

    def add(self, table, row):
        self.rows[table].append(row)


HEADERS = {
    "patients": ["Id", "BIRTHDATE", "DEATHDATE", "FIRST", "LAST", "GENDER", "STATE", "HEALTHCARE_EXPENSES", "HEALTHCARE_COVERAGE"],
    "encounters": ["Id", "START", "STOP", "PATIENT", "ORGANIZATION", "PROVIDER", "PAYER", "ENCOUNTERCLASS", "CODE", "DESCRIPTION", "BASE_ENCOUNTER_COST", "TOTAL_CLAIM_COST", "PAYER_COVERAGE"],
    "conditions": ["START", "STOP", "PATIENT", "ENCOUNTER", "CODE", "DESCRIPTION"],
    "medications": ["START", "STOP", "PATIENT", "PAYER", "ENCOUNTER", "CODE", "DESCRIPTION", "BASE_COST", "PAYER_COVERAGE", "DISPENSES", "TOTALCOST"],
    "procedures": ["START", "STOP", "PATIENT", "ENCOUNTER", "CODE", "DESCRIPTION", "BASE_COST"],
    "immunizations": ["DATE", "PATIENT", "ENCOUNTER", "CODE", "DESCRIPTION", "BASE_COST"],
    "observations": ["DATE", "PATIENT", "ENCOUNTER", "CATEGORY", "CODE", "DESCRIPTION", "VALUE", "UNITS", "TYPE"],
    "imaging_studies": ["Id", "DATE", "PATIENT", "ENCOUNTER", "BODYSITE_CODE", "MODALITY_CODE", "SOP_CODE"],
    "allergies": ["START", "STOP", "PATIENT", "ENCOUNTER", "CODE", "DESCRIPTION"],
    "payers": ["Id", "NAME", "AMOUNT_COVERED", "AMOUNT_UNCOVERED", "REVENUE"],
    "providers": ["Id", "ORGANIZATION", "NAME", "GENDER", "SPECIALITY", "UTILIZATION"],
}

ENCOUNTER_CODES = {
    "wellness": ("410620009", "Well child visit (procedure)"),
    "ambulatory": ("185345009", "Encounter for symptom"),
    "outpatient": ("185349003", "Encounter for check up"),
    "emergency": ("50849002", "Emergency room admission"),
    "urgentcare": ("702927004", "Urgent care clinic"),
    "inpatient": ("185347001", "Encounter for problem"),
}
ACUTE_CODES = (("10509002", "Acute bronchitis"), ("444814009", "Viral sinusitis"), ("195662009", "Acute viral pharyngitis"), ("43878008", "Streptococcal sore throat"))
CHRONIC_CODES = (("44054006", "Diabetes"), ("38341003", "Hypertension"), ("55822004", "Hyperlipidemia"), ("195967001", "Asthma"), ("399211009", "History of myocardial infarction"))
MED_CODES = (("860975", "metformin"), ("314076", "lisinopril"), ("316672", "simvastatin"), ("895994", "fluticasone"), ("197361", "amlodipine"))
OBS_CODES = (("8302-2", "Body Height", "cm"), ("29463-7", "Body Weight", "kg"), ("8480-6", "Systolic Blood Pressure", "mm[Hg]"), ("72514-3", "Pain severity", "{score}"), ("2339-0", "Glucose", "mg/dL"))
PROC_CODES = (("430193006", "Medication reconciliation"), ("710824005", "Assessment of health"), ("171207006", "Depression screening"))
IMM_CODES = (("140", "Influenza seasonal"), ("113", "Td (adult)"), ("133", "Pneumococcal conjugate"))


def _uid(rng):
    return str(uuid.UUID(bytes=rng.bytes(16), version=4))


class _PatientBuilder:
    def __init__(self, cfg, writer, rng, pid, providers, payers):
        self.cfg = cfg
        self.w = writer
        self.rng = rng
        self.pid = pid
        self.providers = providers
        self.payers = payers

    def encounter(self, start, klass, hours=1.0):
        rng = self.rng
        eid = _uid(rng)
        stop = start + timedelta(hours=hours)
        code, desc = ENCOUNTER_CODES[klass]
        cost = CLASS_COST[klass] * float(rng.uniform(0.6, 1.4))
        payer = self.payers[int(rng.integers(len(self.payers)))]
        provider = self.providers[int(rng.integers(len(self.providers)))]
        self.w.add(
            "encounters",
            [eid, _ts(start), _ts(stop), self.pid, "org-1", provider, payer, klass, code, desc,
             _money(CLASS_COST[klass]), _money(cost), _money(cost * float(rng.uniform(0.3, 0.9)))],
        )
        self._attachments(eid, start, klass)
        return eid, stop

    def _attachments(self, eid, start, klass):
        rng, scale = self.rng, self.cfg.aux_scale
        stamp = _ts(start)
        for _ in range(int(rng.poisson(5.0 * scale))):
            code, desc, units = OBS_CODES[int(rng.integers(len(OBS_CODES)))]
            self.w.add("observations", [stamp, self.pid, eid, "vital-signs", code, desc, f"{rng.uniform(1, 200):.1f}", units, "numeric"])
        for _ in range(int(rng.poisson(0.56 * scale))):
            code, desc = PROC_CODES[int(rng.integers(len(PROC_CODES)))]
            self.w.add("procedures", [stamp, _ts(start + timedelta(minutes=15)), self.pid, eid, code, desc, _money(float(rng.uniform(50, 900)))])
        if klass == "wellness":
            for _ in range(int(rng.poisson(1.6 * scale))):
                code, desc = IMM_CODES[int(rng.integers(len(IMM_CODES)))]
                self.w.add("immunizations", [stamp, self.pid, eid, code, desc, "140.52"])
        if rng.random() < 0.009 * scale:
            self.w.add("allergies", [stamp, "", self.pid, eid, "300916003", "Latex allergy"])
        if rng.random() < 0.014 * scale:
            self.w.add("imaging_studies", [_uid(rng), stamp, self.pid, eid, "51185008", "DX", "1.2.840.10008.5.1.4.1.1.1.1"])

    def condition(self, day0, offset, acute):
        """Condition starting ``offset`` days after ``day0``, recorded at its own encounter."""
        rng = self.rng
        start = day0 + offset * DAY
        eid, _ = self.encounter(start + timedelta(hours=10), "emergency" if acute and rng.random() < 0.3 else "ambulatory")
        if acute:
            code, desc = ACUTE_CODES[int(rng.integers(len(ACUTE_CODES)))]
            stop = (start + int(rng.integers(1, 91)) * DAY).date().isoformat()
        else:
            code, desc = CHRONIC_CODES[int(rng.integers(len(CHRONIC_CODES)))]
            stop = "" if rng.random() < 0.7 else (start + int(rng.integers(91, 2000)) * DAY).date().isoformat()
        self.w.add("conditions", [start.date().isoformat(), stop, self.pid, eid, code, desc])

    def medication(self, start, days, dispenses, open_ended=False, encounter_id=None):
        rng = self.rng
        eid = encounter_id or self.encounter(start, "ambulatory")[0]
        code, desc = MED_CODES[int(rng.integers(len(MED_CODES)))]
        base = float(rng.uniform(5, 120))
        stop = "" if open_ended else _ts(start + days * DAY)
        total = base * dispenses
        payer = self.payers[int(rng.integers(len(self.payers)))]
        self.w.add(
            "medications",
            [_ts(start), stop, self.pid, payer, eid, code, desc, _money(base), _money(total * 0.6), str(dispenses), _money(total)],
        )


def _at(day0, offset_days, rng, earliest_hour=8, latest_hour=17):
    """Timestamp ``offset_days`` whole days after ``day0`` at a business hour."""
    minutes = int(rng.integers(earliest_hour * 60, latest_hour * 60)) // 15 * 15
    return day0 + offset_days * DAY + timedelta(minutes=minutes)


def _distinct_days(rng, lo, hi, k):
    """``k`` distinct sorted day offsets in ``[lo, hi)``."""
    if k <= 0:
        return []
    return sorted(int(x) for x in rng.choice(np.arange(lo, hi), size=k, replace=False))


def _split_dispenses(total, expected, rng):
    """Spread ``total`` dispenses over prescriptions, each in ``[1, expected_i]``."""
    k = len(expected)
    out = [1] * k
    left = total - k
    for i in rng.permutation(k):
        extra = min(left, expected[i] - 1)
        out[i] += extra
        left -= extra
    return out


def _expected_refills(seconds):
    span = 30 * 86400
    return max(1, -(-int(seconds) // span))


def _build_eligible(b, day0, feats, visits, has_meds, span_days):
    rng = b.rng
    obs_end = day0 + timedelta(days=365.25 * 5)
    b.encounter(_at(day0, 0, rng, 7, 8), "ambulatory")

    for off in _distinct_days(rng, 1, OBS_DAYS, visits):
        b.encounter(_at(day0, off, rng), "wellness")

    acute = int(feats["acute_conditions"])
    chronic = int(feats["chronic_conditions"])
    offsets = _distinct_days(rng, 1, OBS_DAYS, acute + chronic)
    kinds = [True] * acute + [False] * chronic
    for off, is_acute in zip(offsets, rng.permutation(kinds)):
        b.condition(day0, off, bool(is_acute))

    rate = None
    if has_meds:
        n_rx = int(rng.integers(1, 4))
        plans = []
        for off in _distinct_days(rng, 1, OBS_DAYS - 200, n_rx):
            start = _at(day0, off, rng)
            open_ended = bool(rng.random() < 0.2)
            days = int(rng.integers(180, 901))
            secs = (obs_end - start).total_seconds() if open_ended else days * 86400
            plans.append((start, days, open_ended, _expected_refills(secs)))
        expected = [p[3] for p in plans]
        total_expected = sum(expected)
        dispensed = min(total_expected, max(n_rx, int(round(feats["adherence_rate"] * total_expected))))
        for (start, days, open_ended, _), d in zip(plans, _split_dispenses(dispensed, expected, rng)):
            b.medication(start, days, d, open_ended)
        rate = min(1.0, dispensed / total_expected)

    # inpatient stays outside the outcome window never touch the label
    if rng.random() < 0.15:
        b.encounter(_at(day0, int(rng.integers(1, OBS_DAYS - 10)), rng), "inpatient", hours=48.0)

    _background(b, day0, span_days, visits)
    if span_days > HORIZON_DAYS + 2 and rng.random() < 0.2:
        b.encounter(_at(day0, int(rng.integers(HORIZON_DAYS + 2, span_days)), rng), "inpatient", hours=72.0)
    b.encounter(_at(day0, span_days, rng, 8, 9), "ambulatory")
    return rate


def _background(b, day0, span_days, visits):
    """Routine traffic that never changes a feature or label: non-wellness,
    non-inpatient encounters anywhere, plus conditions, prescriptions and
    wellness visits after the observation window."""
    cfg, rng = b.cfg, b.rng
    for _ in range(int(rng.poisson(24 * cfg.aux_scale))):
        klass = ROUTINE_CLASSES[int(rng.choice(4, p=(0.6, 0.25, 0.08, 0.07)))]
        b.encounter(_at(day0, int(rng.integers(1, span_days)), rng), klass)
    late = span_days - OBS_DAYS - 2
    if late <= 1:
        return
    yearly = visits / 5.0
    for _ in range(int(rng.poisson(yearly * late / 365.25))):
        b.encounter(_at(day0, OBS_DAYS + 2 + int(rng.integers(late)), rng), "wellness")
    for _ in range(int(rng.poisson(4.5 * cfg.aux_scale))):
        b.condition(day0, OBS_DAYS + 2 + int(rng.integers(late)), bool(rng.random() < 0.5))
    for _ in range(int(rng.poisson(11 * cfg.aux_scale))):
        start = _at(day0, OBS_DAYS + 2 + int(rng.integers(late)), rng)
        eid, _ = b.encounter(start, "ambulatory")
        for _ in range(1 + int(rng.poisson(2.0))):
            days = int(rng.integers(30, 365))
            b.medication(start, days, int(rng.integers(1, days // 30 + 2)), encounter_id=eid)


def _build_ineligible(b, day0, span_days):
    rng = b.rng
    b.encounter(_at(day0, 0, rng, 7, 8), "ambulatory")
    for _ in range(int(rng.integers(0, 4))):
        b.condition(day0, int(rng.integers(1, span_days)), bool(rng.random() < 0.5))
    for _ in range(int(rng.integers(0, 3))):
        start = _at(day0, int(rng.integers(1, span_days)), rng)
        b.medication(start, 90, int(rng.integers(1, 4)))
    for _ in range(int(rng.poisson(20 * b.cfg.aux_scale))):
        klass = ("wellness", "ambulatory", "outpatient", "inpatient")[int(rng.choice(4, p=(0.2, 0.6, 0.15, 0.05)))]
        b.encounter(_at(day0, int(rng.integers(1, span_days)), rng), klass)
    b.encounter(_at(day0, span_days, rng, 8, 9), "ambulatory")


def _birth_date(index_date, age, rng):
    """A birth date at which ``age_at`` gives exactly ``age`` on ``index_date``."""
    lo = -(-1461 * age // 4)
    hi = -(-1461 * (age + 1) // 4) - 1
    return index_date - int(rng.integers(lo, hi + 1)) * DAY


@dataclass
class Corpus:
    tables: dict  # table -> list of rows (strings), headers in HEADERS
    manifest: Manifest

    def counts(self):
        return {t: len(rows) for t, rows in self.tables.items()}


def generate(cfg=GeneratorConfig()):
    """Build the corpus in memory. Use :func:`write_corpus` to emit it."""
    sigma = latent_correlation_matrix(cfg) if cfg.n_patients else np.eye(len(LATENTS))
    latent_rng = _random.derive_rng(cfg.seed, 0)
    n = cfg.n_patients
    z = latent_rng.standard_normal((n, len(LATENTS))) @ np.linalg.cholesky(sigma).T
    has_meds = latent_rng.random(n) >= cfg.no_medication_rate
    feats = materialize_latents(z, has_meds)
    n_bad = int(round(n * cfg.ineligible_fraction))
    ineligible = np.zeros(n, dtype=bool)
    if n_bad:
        ineligible[latent_rng.choice(n, size=n_bad, replace=False)] = True

    writer = _Writer()
    support = _random.derive_rng(cfg.seed, 2)
    payers = [_uid(support) for _ in range(10)]
    for i, pid in enumerate(payers):
        writer.add("payers", [pid, f"Payer {i + 1}", _money(support.uniform(1e5, 1e7)), _money(support.uniform(1e4, 1e6)), _money(support.uniform(1e5, 1e7))])
    n_providers = max(10, int(round(5 * n * cfg.aux_scale)))
    providers = [_uid(support) for _ in range(n_providers)]
    for pid in providers:
        writer.add("providers", [pid, "org-1", f"Dr. {pid[:8]}", "F" if support.random() < 0.5 else "M", "GENERAL PRACTICE", str(int(support.integers(0, 3000)))])

    built = []
    for i in range(n):
        rng = _random.derive_rng(cfg.seed, 1, i)
        pid = _uid(rng)
        b = _PatientBuilder(cfg, writer, rng, pid, providers, payers)
        y0, y1 = cfg.start_year_range
        index_date = date(int(rng.integers(y0, y1 + 1)), 1, 1) + int(rng.integers(0, 365)) * DAY
        day0 = datetime.combine(index_date, time())
        age = int(feats["age"][i])
        death = None
        row = {k: float(v[i]) for k, v in feats.items() if k in FEATURE_NAMES}
        row["expenses"] = float(_money(row["expenses"]))
        row["coverage"] = float(_money(row["coverage"]))
        if ineligible[i]:
            reason = "died" if rng.random() < 0.3 else "short_history"
            span_days = int(rng.integers(3 * 365, 9 * 365 + 180))
            if reason == "died":
                death = index_date + (span_days + int(rng.integers(0, 30))) * DAY
            _build_ineligible(b, day0, span_days)
            truth = PatientTruth(pid, False, index_date.isoformat(), reason)
        else:
            lo, hi = cfg.history_years_range
            span_days = int(math.ceil(rng.uniform(lo, hi) * 365.25))
            if rng.random() < 0.1:
                death = index_date + (span_days + int(rng.integers(1, 400))) * DAY
            visits = int(feats["wellness_visits"][i])
            rate = _build_eligible(b, day0, row, visits, bool(has_meds[i]), span_days)
            row["adherence_rate"] = 1.0 if rate is None else rate
            row["low_adherence"] = float(rate is not None and rate < 0.8)
            truth = PatientTruth(pid, True, index_date.isoformat(), None, row, rate is not None)
        birth = _birth_date(index_date, age, rng)
        gender = "M" if row["gender_code"] == 1.0 else "F"
        writer.add(
            "patients",
            [pid, birth.isoformat(), death.isoformat() if death else "", f"Pat{i}", f"Gen{cfg.seed}", gender, "Massachusetts",
             _money(row["expenses"]), _money(row["coverage"])],
        )
        built.append((truth, b, day0, row))

    # planted outcome, calibrated on the eligible cohort as materialized
    elig = [t for t, *_ in built if t.eligible]
    X = np.array([[t.features[f] for f in FEATURE_NAMES] for t in elig]).reshape(len(elig), len(FEATURE_NAMES))
    eta = _logit_without_intercept(X, list(FEATURE_NAMES), cfg.effect_log_odds, cfg.interaction_terms)
    intercept = solve_intercept(eta, cfg.base_rate)
    probs = special.expit(intercept + eta)
    outcome_rng = _random.derive_rng(cfg.seed, 3)
    draws = outcome_rng.random(len(elig))
    j = 0
    for truth, b, day0, row in built:
        if truth.eligible:
            truth.true_probability = float(probs[j])
            truth.label = bool(draws[j] < probs[j])
            if truth.label:
                # outcome-window stays use their own stream so the label draw
                # cannot perturb any other record
                b.rng = _random.derive_rng(cfg.seed, 4, j)
                for off in _distinct_days(b.rng, OBS_DAYS + 2, HORIZON_DAYS - 1, 1 + int(b.rng.random() < 0.3)):
                    b.encounter(_at(day0, off, b.rng), "inpatient", hours=24.0 * int(b.rng.integers(2, 9)))
            j += 1
        else:
            xrow = np.array([[row[f] for f in FEATURE_NAMES]])
            truth.true_probability = float(
                special.expit(intercept + _logit_without_intercept(xrow, list(FEATURE_NAMES), cfg.effect_log_odds, cfg.interaction_terms))[0]
            )

    tables = writer.rows
    tables["encounters"].sort(key=lambda r: (r[3], r[1], r[0]))
    manifest = Manifest(
        config=cfg.to_dict(),
        counts={t: len(rows) for t, rows in tables.items()},
        intercept=float(intercept),
        effects=dict(cfg.effect_log_odds),
        interactions=[asdict(t) for t in cfg.interaction_terms],
        patients=[t for t, *_ in built],
    )
    return Corpus(tables, manifest)


def write_corpus(corpus, out_dir):
    """Write the eleven CSVs and ``manifest.json``; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for table in TABLE_NAMES:
        path = os.path.join(out_dir, SCHEMAS[table].default_file)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADERS[table])
            w.writerows(corpus.tables[table])
        paths[table] = path
    paths["manifest"] = os.path.join(out_dir, MANIFEST_FILE)
    corpus.manifest.dump(paths["manifest"])
    return paths


def generate_to_dir(cfg, out_dir):
    corpus = generate(cfg)
    write_corpus(corpus, out_dir)
    return corpus.manifest


# --- verification ------------------------------------------------------------------


@dataclass
class Mismatch:
    patient_id: str
    field: str
    expected: object
    actual: object


@dataclass
class CheckReport:
    n_patients: int
    n_eligible_expected: int
    n_eligible_actual: int
    mismatches: list

    @property
    def ok(self):
        return not self.mismatches

    def for_patient(self, pid):
        return [m for m in self.mismatches if m.patient_id == pid]

    def to_dict(self):
        return {
            "n_patients": self.n_patients,
            "n_eligible_expected": self.n_eligible_expected,
            "n_eligible_actual": self.n_eligible_actual,
            "mismatches": [asdict(m) for m in self.mismatches],
        }


def manifest_check(dataset_dir, manifest=None, cohort_config=None):
    """Run ingest and cohort extraction over ``dataset_dir`` and diff every
    feature, eligibility flag, index date and label against the manifest."""
    from .cohort import CohortConfig, build_row, filter_eligible
    from .ingest import load_dataset

    if manifest is None:
        manifest = Manifest.load(os.path.join(dataset_dir, MANIFEST_FILE))
    elif isinstance(manifest, (str, os.PathLike)):
        manifest = Manifest.load(manifest)
    cfg = cohort_config or CohortConfig()
    ds = load_dataset(dataset_dir)
    eligible = dict(filter_eligible(ds, cfg))
    out = []
    seen = set()
    for truth in manifest.patients:
        pid = truth.id
        seen.add(pid)
        if pid not in ds.by_patient:
            out.append(Mismatch(pid, "present", True, False))
            continue
        if (pid in eligible) != truth.eligible:
            out.append(Mismatch(pid, "eligible", truth.eligible, pid in eligible))
            continue
        if not truth.eligible:
            continue
        row = build_row(pid, eligible[pid], ds, cfg)
        if row.index_date.isoformat() != truth.first_encounter:
            out.append(Mismatch(pid, "index_date", truth.first_encounter, row.index_date.isoformat()))
        vec = row.feature_vector()
        for name, actual in zip(FEATURE_NAMES, vec):
            expected = truth.features[name]
            if float(actual) != float(expected):
                out.append(Mismatch(pid, name, expected, float(actual)))
        if row.label_inpatient != truth.label:
            out.append(Mismatch(pid, "label_inpatient", truth.label, row.label_inpatient))
    for pid in sorted(set(ds.by_patient) - seen):
        out.append(Mismatch(pid, "present", False, True))
    return CheckReport(
        n_patients=len(manifest.patients),
        n_eligible_expected=sum(p.eligible for p in manifest.patients),
        n_eligible_actual=len(eligible),
        mismatches=out,
    )
