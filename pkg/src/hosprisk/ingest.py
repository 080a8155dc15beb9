"""Typed, referentially-checked loading of the eleven Synthea-style CSV tables.

Column names follow the open Synthea CSV export. Extra columns are ignored
with a warning. Timestamps are ISO-8601 (date or date-time); they are held as
timezone-naive UTC ``datetime`` values, and date-only inputs map to midnight.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from types import MappingProxyType

log = logging.getLogger(__name__)


class IngestError(Exception):
    pass


class EmptyFile(IngestError):
    pass


class MissingColumn(IngestError):
    def __init__(self, table, columns):
        self.table = table
        self.columns = tuple(columns)
        super().__init__(f"{table}: header lacks required column(s) {', '.join(self.columns)}")


class FieldTypeError(IngestError, TypeError):
    """One or more cells failed conversion; ``problems`` holds ``(line, column, value, reason)``."""

    def __init__(self, table, problems):
        self.table = table
        self.problems = list(problems)
        shown = "; ".join(f"line {ln} column {col} value {val!r}: {why}" for ln, col, val, why in self.problems[:5])
        more = f" (+{len(self.problems) - 5} more)" if len(self.problems) > 5 else ""
        super().__init__(f"{table}: {shown}{more}")


class MissingTable(IngestError):
    pass


class DanglingReference(IngestError):
    """Foreign keys that do not resolve; ``problems`` holds ``(table, row_key, column, missing_id)``."""

    def __init__(self, problems):
        self.problems = list(problems)
        shown = "; ".join(f"{t} row {k}: {c}={m!r}" for t, k, c, m in self.problems[:5])
        more = f" (+{len(self.problems) - 5} more)" if len(self.problems) > 5 else ""
        super().__init__(f"dangling references: {shown}{more}")

    @property
    def offending_ids(self):
        return [k for _, k, _, _ in self.problems]


# --- records -----------------------------------------------------------------


@dataclass(frozen=True)
class PatientRecord:
    id: str
    birth_date: date
    death_date: date | None
    gender: str  # "M" or "F"
    healthcare_expenses: float
    healthcare_coverage: float


@dataclass(frozen=True)
class EncounterRecord:
    id: str
    start: datetime
    stop: datetime | None
    patient_id: str
    encounter_class: str
    code: str
    total_claim_cost: float
    payer_coverage: float
    provider_id: str | None = None
    payer_id: str | None = None


@dataclass(frozen=True)
class ConditionRecord:
    start: date
    stop: date | None
    patient_id: str
    encounter_id: str
    code: str
    description: str = ""


@dataclass(frozen=True)
class MedicationRecord:
    start: datetime
    stop: datetime | None
    patient_id: str
    encounter_id: str
    code: str
    base_cost: float
    payer_coverage: float
    dispenses: int
    total_cost: float


@dataclass(frozen=True)
class AuxRecord:
    """Row of a table that is validated but not used for features."""

    table: str
    id: str | None = None
    patient_id: str | None = None
    encounter_id: str | None = None
    date: datetime | None = None
    code: str | None = None
    cost: float | None = None
    extra: dict = field(default_factory=dict, compare=False)


# --- cell converters -----------------------------------------------------------


class _Bad(ValueError):
    pass


def parse_datetime(text):
    """ISO-8601 date or date-time to naive UTC ``datetime``."""
    s = text.strip()
    if len(s) == 10:
        return datetime.strptime(s, "%Y-%m-%d")
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return dt


def parse_date(text):
    s = text.strip()
    if len(s) == 10:
        return date.fromisoformat(s)
    return parse_datetime(s).date()


def _money(text):
    v = float(text)
    if not math.isfinite(v):
        raise _Bad("not a finite amount")
    if v < 0:
        raise _Bad("negative amount")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise _Bad("must be an integer >= 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise _Bad("must be an integer >= 0")
    return v


def _gender(text):
    v = text.strip().upper()
    if v not in ("M", "F"):
        raise _Bad("gender must be M or F")
    return v


def _nonempty(text):
    if not text.strip():
        raise _Bad("empty value")
    return text


def _token(text):
    return _nonempty(text).strip().lower()


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise _Bad("not finite")
    return v


_CONVERTERS = {
    "id": _nonempty,
    "str": str,
    "token": _token,
    "date": parse_date,
    "datetime": parse_datetime,
    "money": _money,
    "count": _positive_int,
    "nonneg_int": _nonneg_int,
    "gender": _gender,
    "float": _float,
}


@dataclass(frozen=True)
class Column:
    name: str  # CSV header
    field: str  # record attribute
    kind: str = "str"
    nullable: bool = False  # empty cell -> None
    required: bool = True  # must appear in the header
    ref: str | None = None  # referenced table (by its ``id`` column)


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple
    record: type = AuxRecord

    @property
    def default_file(self):
        return f"{self.name}.csv"

    @property
    def header(self):
        return [c.name for c in self.columns]


def _C(*args, **kw):
    return Column(*args, **kw)


SCHEMAS = {
    s.name: s
    for s in (
        TableSchema(
            "patients",
            (
                _C("Id", "id", "id"),
                _C("BIRTHDATE", "birth_date", "date"),
                _C("DEATHDATE", "death_date", "date", nullable=True),
                _C("GENDER", "gender", "gender"),
                _C("HEALTHCARE_EXPENSES", "healthcare_expenses", "money"),
                _C("HEALTHCARE_COVERAGE", "healthcare_coverage", "money"),
            ),
            PatientRecord,
        ),
        TableSchema(
            "encounters",
            (
                _C("Id", "id", "id"),
                _C("START", "start", "datetime"),
                _C("STOP", "stop", "datetime", nullable=True),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("PROVIDER", "provider_id", "id", nullable=True, required=False, ref="providers"),
                _C("PAYER", "payer_id", "id", nullable=True, required=False, ref="payers"),
                _C("ENCOUNTERCLASS", "encounter_class", "token"),
                _C("CODE", "code", "id"),
                _C("TOTAL_CLAIM_COST", "total_claim_cost", "money"),
                _C("PAYER_COVERAGE", "payer_coverage", "money"),
            ),
            EncounterRecord,
        ),
        TableSchema(
            "conditions",
            (
                _C("START", "start", "date"),
                _C("STOP", "stop", "date", nullable=True),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", ref="encounters"),
                _C("CODE", "code", "id"),
                _C("DESCRIPTION", "description", "str", required=False),
            ),
            ConditionRecord,
        ),
        TableSchema(
            "medications",
            (
                _C("START", "start", "datetime"),
                _C("STOP", "stop", "datetime", nullable=True),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", ref="encounters"),
                _C("CODE", "code", "id"),
                _C("BASE_COST", "base_cost", "money"),
                _C("PAYER_COVERAGE", "payer_coverage", "money"),
                _C("DISPENSES", "dispenses", "count"),
                _C("TOTALCOST", "total_cost", "money"),
            ),
            MedicationRecord,
        ),
        TableSchema(
            "procedures",
            (
                _C("START", "date", "datetime"),
                _C("STOP", "stop", "datetime", nullable=True, required=False),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", ref="encounters"),
                _C("CODE", "code", "id"),
                _C("DESCRIPTION", "description", "str", required=False),
                _C("BASE_COST", "cost", "money"),
            ),
        ),
        TableSchema(
            "immunizations",
            (
                _C("DATE", "date", "datetime"),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", ref="encounters"),
                _C("CODE", "code", "id"),
                _C("DESCRIPTION", "description", "str", required=False),
                _C("BASE_COST", "cost", "money"),
            ),
        ),
        TableSchema(
            "observations",
            (
                _C("DATE", "date", "datetime"),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", nullable=True, ref="encounters"),
                _C("CODE", "code", "id"),
                _C("DESCRIPTION", "description", "str", required=False),
                _C("VALUE", "value", "str"),
                _C("UNITS", "units", "str", required=False),
                _C("TYPE", "type", "str", required=False),
            ),
        ),
        TableSchema(
            "imaging_studies",
            (
                _C("Id", "id", "id"),
                _C("DATE", "date", "datetime"),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", ref="encounters"),
                _C("BODYSITE_CODE", "bodysite_code", "str", required=False),
                _C("MODALITY_CODE", "code", "id"),
                _C("SOP_CODE", "sop_code", "str", required=False),
            ),
        ),
        TableSchema(
            "allergies",
            (
                _C("START", "date", "datetime"),
                _C("STOP", "stop", "datetime", nullable=True, required=False),
                _C("PATIENT", "patient_id", "id", ref="patients"),
                _C("ENCOUNTER", "encounter_id", "id", ref="encounters"),
                _C("CODE", "code", "id"),
                _C("DESCRIPTION", "description", "str", required=False),
            ),
        ),
        TableSchema(
            "payers",
            (
                _C("Id", "id", "id"),
                _C("NAME", "name", "str"),
                _C("AMOUNT_COVERED", "cost", "money", required=False, nullable=True),
                _C("AMOUNT_UNCOVERED", "amount_uncovered", "money", required=False, nullable=True),
                _C("REVENUE", "revenue", "money", required=False, nullable=True),
            ),
        ),
        TableSchema(
            "providers",
            (
                _C("Id", "id", "id"),
                _C("ORGANIZATION", "organization", "str", required=False),
                _C("NAME", "name", "str"),
                _C("GENDER", "gender", "gender", required=False, nullable=True),
                _C("SPECIALITY", "speciality", "str", required=False),
                _C("UTILIZATION", "utilization", "nonneg_int", required=False, nullable=True),
            ),
        ),
    )
}

TABLE_NAMES = tuple(SCHEMAS)
DEFAULT_FILE_NAMES = MappingProxyType({name: s.default_file for name, s in SCHEMAS.items()})
_AUX_FIELDS = {"id", "patient_id", "encounter_id", "date", "code", "cost"}


def _build(schema, values):
    if schema.record is AuxRecord:
        core = {k: v for k, v in values.items() if k in _AUX_FIELDS}
        extra = {k: v for k, v in values.items() if k not in _AUX_FIELDS}
        return AuxRecord(table=schema.name, extra=extra, **core)
    return schema.record(**values)


def parse_table(path, schema, allow_empty=False):
    """Parse one CSV file into a tuple of typed records.

    Every bad cell in the file is collected before raising, so the error
    lists all offending line numbers at once.
    """
    if isinstance(schema, str):
        schema = SCHEMAS[schema]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{schema.name}: {path} is empty (no header row)") from None
        header = [h.strip() for h in header]
        if header and header[0].startswith("﻿"):
            header[0] = header[0][1:]
        position = {name: i for i, name in enumerate(header)}
        missing = [c.name for c in schema.columns if c.required and c.name not in position]
        if missing:
            raise MissingColumn(schema.name, missing)
        known = {c.name for c in schema.columns}
        extra = [h for h in header if h not in known]
        if extra:
            log.warning("%s: ignoring unknown column(s) %s", schema.name, ", ".join(extra))

        plan = [(c, position[c.name], _CONVERTERS[c.kind]) for c in schema.columns if c.name in position]
        absent = {c.field: None if c.nullable else "" for c in schema.columns if c.name not in position}
        width = len(header)
        records = []
        problems = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                problems.append((line, "*", ",".join(row), f"expected {width} fields, got {len(row)}"))
                continue
            values = dict(absent)
            ok = True
            for col, i, conv in plan:
                cell = row[i]
                if col.nullable and not cell.strip():
                    values[col.field] = None
                    continue
                try:
                    values[col.field] = conv(cell)
                except (ValueError, TypeError) as exc:
                    problems.append((line, col.name, cell, str(exc) or type(exc).__name__))
                    ok = False
            if ok:
                why = _row_invariant(values)
                if why:
                    problems.append((line, why[0], str(why[1]), why[2]))
                else:
                    records.append(values)
    if problems:
        raise FieldTypeError(schema.name, problems)
    if not records and not allow_empty:
        raise EmptyFile(f"{schema.name}: {path} has a header but no data rows")

    return tuple(_build(schema, values) for values in records)


def _row_invariant(values):
    start = values.get("start", values.get("date"))
    stop = values.get("stop")
    if start is not None and stop is not None and stop < start:
        return "STOP", stop, "stop precedes start"
    death = values.get("death_date")
    if death is not None and death < values["birth_date"]:
        return "DEATHDATE", death, "death precedes birth"
    return None


# --- dataset -----------------------------------------------------------------


_PATIENT_TABLES = (
    "encounters",
    "conditions",
    "medications",
    "procedures",
    "immunizations",
    "observations",
    "imaging_studies",
    "allergies",
)


@dataclass(frozen=True)
class PatientEvents:
    patient: PatientRecord
    encounters: tuple = ()
    conditions: tuple = ()
    medications: tuple = ()
    procedures: tuple = ()
    immunizations: tuple = ()
    observations: tuple = ()
    imaging_studies: tuple = ()
    allergies: tuple = ()


@dataclass(frozen=True)
class EhrDataset:
    """All eleven tables plus a per-patient index. Treat as read-only."""

    patients: tuple
    encounters: tuple
    conditions: tuple
    medications: tuple
    procedures: tuple
    immunizations: tuple
    observations: tuple
    imaging_studies: tuple
    allergies: tuple
    payers: tuple
    providers: tuple
    by_patient: MappingProxyType = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.by_patient is None:
            object.__setattr__(self, "by_patient", _index(self))

    def table(self, name):
        return getattr(self, name)

    def counts(self):
        return {name: len(getattr(self, name)) for name in TABLE_NAMES}

    def patient(self, patient_id):
        return self.by_patient[patient_id].patient


def _index(ds):
    groups = {p.id: defaultdict(list) for p in ds.patients}
    for name in _PATIENT_TABLES:
        for rec in getattr(ds, name):
            groups[rec.patient_id][name].append(rec)
    return MappingProxyType(
        {
            p.id: PatientEvents(p, **{name: tuple(groups[p.id][name]) for name in _PATIENT_TABLES})
            for p in ds.patients
        }
    )


def check_references(tables):
    """Return ``(table, row_key, column, missing_id)`` for every unresolved foreign key
    and duplicated primary key."""
    ids = {}
    problems = []
    for name in ("patients", "encounters", "payers", "providers"):
        seen = set()
        for rec in tables[name]:
            if rec.id in seen:
                problems.append((name, rec.id, "Id", f"duplicate id {rec.id}"))
            seen.add(rec.id)
        ids[name] = seen
    for name, schema in SCHEMAS.items():
        refs = [c for c in schema.columns if c.ref]
        if not refs:
            continue
        for n, rec in enumerate(tables[name], start=2):
            key = getattr(rec, "id", None) or f"#{n}"
            for col in refs:
                value = getattr(rec, col.field, None)
                if value is None and col.nullable:
                    continue
                if value is None or value == "" or value not in ids[col.ref]:
                    problems.append((name, key, col.name, value))
    return problems


def load_dataset(directory, file_names=None, workers=1):
    """Parse every table in ``directory``, check integrity and build the index.

    ``file_names`` overrides entries of :data:`DEFAULT_FILE_NAMES`. Only the
    patients table must be non-empty.
    """
    names = dict(DEFAULT_FILE_NAMES)
    names.update(file_names or {})
    paths = {t: os.path.join(directory, names[t]) for t in TABLE_NAMES}
    missing = [t for t, p in paths.items() if not os.path.isfile(p)]
    if missing:
        raise MissingTable(
            "missing table file(s): " + ", ".join(f"{t} ({os.path.basename(paths[t])})" for t in missing)
        )

    def parse(t):
        return parse_table(paths[t], SCHEMAS[t], allow_empty=(t != "patients"))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parsed = dict(zip(TABLE_NAMES, pool.map(parse, TABLE_NAMES)))
    else:
        parsed = {t: parse(t) for t in TABLE_NAMES}

    problems = check_references(parsed)
    if problems:
        raise DanglingReference(problems)
    ds = EhrDataset(**parsed)
    log.info("loaded %s", ", ".join(f"{k}={v}" for k, v in ds.counts().items()))
    return ds
