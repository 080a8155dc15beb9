"""Command-line driver: ``hosprisk <command> [--config run.json] [flags]``.

Settings resolve as flag > config file > built-in default. Exit status is 0
on success, 1 when a pipeline stage fails on the data, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__, cohort, evaluation, ingest, models, roi, synthgen

log = logging.getLogger("hosprisk")

REPORT_VERSION = 1
REPORT_FILE = "report.json"
STALE_FILE = "STALE"

DEFAULT_GRIDS = {
    "logreg": {"c": [0.01, 0.1, 1.0], "penalty": ["l1", "l2"]},
    "gradient_boosting": {"learning_rate": [0.01, 0.1], "max_depth": [2, 3], "n_trees": [200]},
    "random_forest": {"min_samples_leaf": [2, 4], "max_depth": [5, 10]},
    "mlp": {"units_1": [64, 128], "units_2": [32, 64]},
}

INF = math.inf
DEFAULT_SUBGROUPS = (
    {"target": "wellness_perc", "grouping": "acute_conditions", "bins": [[0, 1], [1, 2], [2, None]]},
    {"target": "wellness_perc", "grouping": "age", "bins": [[0, 20], [20, 40], [40, 60], [60, None]]},
    {"target": "wellness_perc", "grouping": "chronic_conditions", "bins": [[0, 4], [4, None]]},
    {"target": "wellness_perc", "grouping": "low_adherence", "bins": [[0, 1], [1, 2]]},
    {"target": "adherence_rate", "grouping": "age", "bins": [[0, 20], [20, 40], [40, 60], [60, None]]},
    {"target": "adherence_rate", "grouping": "wellness_perc", "bins": [[0, 0.2], [0.2, 0.4], [0.4, None]]},
)

DEFAULT_COUNTERFACTUALS = (
    {"feature": "wellness_perc", "baseline": 0.0, "treated": 1.0},
    {"feature": "low_adherence", "baseline": 1.0, "treated": 0.0},
)

DEFAULTS = {
    "data_dir": "data",
    "output_dir": "out",
    "seed": 0,
    "threshold": 0.5,
    "models": list(models.MODEL_KINDS),
    "test_fraction": 0.2,
    "cv_folds": 5,
    "importance_repeats": 10,
    "workers": 1,
    "grids": DEFAULT_GRIDS,
    "cohort": {},
    "costs": {},
    "generator": {},
    "subgroups": list(DEFAULT_SUBGROUPS),
    "counterfactuals": list(DEFAULT_COUNTERFACTUALS),
}

# settings that change where or how fast, never what
_NOT_HASHED = {"data_dir", "output_dir", "workers"}


class ConfigError(Exception):
    """Bad configuration or usage; exit status 2."""


class StageError(Exception):
    """A pipeline stage failed; exit status 1."""

    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


# --- configuration -------------------------------------------------------------------


def load_config(path):
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config key(s) in {path}: {', '.join(sorted(unknown))}")
    return cfg


def resolve(args):
    """Merge defaults, config file and flags into one validated dict."""
    cfg = json.loads(json.dumps(DEFAULTS, default=_json_default))
    cfg.update(load_config(getattr(args, "config", None)))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        cfg["threshold"] = args.threshold
    if getattr(args, "models", None):
        cfg["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "data", None):
        cfg["data_dir"] = args.data
    costs = dict(cfg["costs"])
    for flag, key in (("preventive_cost", "preventive_cost_5yr"), ("hosp_cost", "avg_hospitalization_cost"), ("risk_reduction", "risk_reduction")):
        if getattr(args, flag, None) is not None:
            costs[key] = getattr(args, flag)
    cfg["costs"] = costs

    try:
        cfg["models"] = [models.canonical_kind(m) for m in cfg["models"]]
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg["models"]:
        raise ConfigError("no models selected")
    if len(set(cfg["models"])) != len(cfg["models"]):
        raise ConfigError("duplicate model in selection")
    if not 0.0 <= cfg["threshold"] <= 1.0:
        raise ConfigError("threshold must lie in [0, 1]")
    if not 0.0 < cfg["test_fraction"] < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if int(cfg["cv_folds"]) < 2:
        raise ConfigError("cv_folds must be >= 2")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    for kind in cfg["models"]:
        grid = cfg["grids"].get(kind)
        if grid is None:
            raise ConfigError(f"no grid for model {kind}")
        try:
            for point in evaluation.expand_grid(grid):
                models.make_params(kind, **point)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid for {kind}: {exc}") from exc
    try:
        cfg["_cohort"] = cohort.CohortConfig(**cfg["cohort"])
        cfg["_costs"] = roi.CostAssumptions(**cfg["costs"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def config_hash(cfg):
    payload = {k: v for k, v in cfg.items() if not k.startswith("_") and k not in _NOT_HASHED}
    blob = json.dumps(_finite(payload), sort_keys=True, default=_json_default, allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj):
    """Replace infinities (open bin ends) with None, recursively."""
    if isinstance(obj, float) and math.isinf(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _bins(raw):
    return [(-INF if lo is None else float(lo), INF if hi is None else float(hi)) for lo, hi in raw]


def data_fingerprint(data_dir):
    """SHA-256 over the eleven input tables, independent of their location."""
    h = hashlib.sha256()
    for table in ingest.TABLE_NAMES:
        path = os.path.join(data_dir, ingest.DEFAULT_FILE_NAMES[table])
        h.update(table.encode())
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def write_json(path, obj):
    text = json.dumps(_finite(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])


# --- pipeline stages --------------------------------------------------------------------


class _Stages:
    """Runs named stages, turning any data failure into :class:`StageError`."""

    def __init__(self):
        self.current = None

    def __call__(self, name, fn, *a, **kw):
        self.current = name
        log.info("stage: %s", name)
        try:
            return fn(*a, **kw)
        except (ConfigError, StageError):
            raise
        except Exception as exc:  # noqa: BLE001 - every failure is attributed to its stage
            raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def _load_cohort(cfg, stage):
    ds = stage("ingest", ingest.load_dataset, cfg["data_dir"], workers=cfg["workers"])
    return ds, stage("cohort", cohort.build_feature_matrix, ds, cfg["_cohort"])


def evaluate_model(kind, cfg, train, X_test, y_test, stage):
    seed, workers = cfg["seed"], cfg["workers"]
    thr = cfg["threshold"]
    search = stage(f"grid_search:{kind}", evaluation.grid_search, kind, cfg["grids"][kind], train,
                   k=cfg["cv_folds"], seed=seed, n_jobs=workers)
    model = search.model
    model.threshold = thr

    def metrics():
        cm, ms = evaluation.compute_metrics(model.classify(X_test), y_test)
        return cm, ms

    cm, ms = stage(f"metrics:{kind}", metrics)
    repeats = cfg["importance_repeats"]
    imp = stage(f"importance:{kind}", evaluation.permutation_importance, model, X_test, y_test, repeats, seed)

    def subgroups():
        out = []
        for spec in cfg["subgroups"]:
            try:
                bins = evaluation.subgroup_importance(model, X_test, y_test, spec["target"], spec["grouping"],
                                                      _bins(spec["bins"]), repeats, seed)
            except evaluation.EmptyBin as exc:
                out.append({"target": spec["target"], "grouping": spec["grouping"], "bins": [], "error": str(exc)})
                continue
            out.append({"target": spec["target"], "grouping": spec["grouping"], "bins": [b.to_dict() for b in bins]})
        return out

    subs = stage(f"subgroup_importance:{kind}", subgroups)

    def counterfactuals():
        out = []
        for spec in cfg["counterfactuals"]:
            try:
                eff = evaluation.counterfactual_effect(model, X_test, spec["feature"], spec["baseline"], spec["treated"])
            except evaluation.NoHighRiskRows:
                eff = None
            out.append({**spec, "risk_reduction": eff})
        return out

    cfx = stage(f"counterfactual:{kind}", counterfactuals)
    costs = cfg["_costs"]
    report = stage(f"roi:{kind}", roi.roi_from_confusion, cm, costs, kind)
    sens = stage(f"roi_sensitivity:{kind}", roi.roi_sensitivity, model, X_test, y_test, costs)
    return {
        "kind": kind,
        "best_params": search.best_params,
        "cv_best_score": search.best_score,
        "cv_candidates": search.to_dict()["candidates"],
        "threshold": thr,
        "accuracy": ms.accuracy,
        "precision": ms.precision,
        "recall": ms.recall,
        "f1": ms.f1,
        "confusion": cm.to_dict(),
        "roi": report.roi,
        "roi_report": report.to_dict(),
        "importance": imp.to_dict(),
        "impurity_importance": evaluation.impurity_importance(model),
        "subgroup_importance": subs,
        "counterfactuals": cfx,
        "roi_sensitivity": [p.to_row() for p in sens],
    }


def run_pipeline(cfg, out_dir, echo=print):
    os.makedirs(out_dir, exist_ok=True)
    stale = os.path.join(out_dir, STALE_FILE)
    if os.path.exists(stale):
        os.remove(stale)
    stage = _Stages()
    try:
        _, fm = _load_cohort(cfg, stage)
        stage("write_cohort", cohort.write_cohort_csv, os.path.join(out_dir, "cohort.csv"), fm)
        names = list(fm.feature_names)
        plan = stage("split", evaluation.stratified_split, fm.y, cfg["test_fraction"], cfg["seed"])
        train = models.TrainingSet(fm.X[plan.train_indices], fm.y[plan.train_indices], tuple(names))
        X_test, y_test = fm.X[plan.test_indices], fm.y[plan.test_indices]
        corr = stage("correlations", evaluation.pearson_matrix, fm.X, names)
        write_csv(os.path.join(out_dir, "correlations.csv"), ["feature_a", "feature_b", "pearson"],
                  evaluation.correlation_long(corr, names))
        entries = [evaluate_model(k, cfg, train, X_test, y_test, stage) for k in cfg["models"]]
        majority = float(max(y_test.mean(), 1.0 - y_test.mean()))
        report = {
            "format_version": REPORT_VERSION,
            "tool_version": __version__,
            "config_hash": config_hash(cfg),
            "seed": cfg["seed"],
            "data_sha256": stage("fingerprint", data_fingerprint, cfg["data_dir"]),
            "config": {k: v for k, v in cfg.items() if not k.startswith("_") and k not in _NOT_HASHED},
            "cohort": {
                "n_rows": int(fm.y.size),
                "n_positive": int(fm.y.sum()),
                "base_rate": float(fm.y.mean()),
            },
            "split": {"n_train": int(plan.train_indices.size), "n_test": int(plan.test_indices.size)},
            "majority_baseline_accuracy": majority,
            "costs": cfg["_costs"].to_dict(),
            "correlations": {"features": names, "matrix": corr.tolist()},
            "models": entries,
        }
        stage("write_outputs", _write_outputs, out_dir, report)
    except StageError as exc:
        with open(stale, "w", encoding="utf-8") as fh:
            fh.write(f"{exc}\n")
        raise
    echo(format_summary(report))
    return report


def _write_outputs(out_dir, report):
    rows = []
    for m in report["models"]:
        rows.extend((m["kind"], f["feature"], f["importance"], f["raw"]) for f in m["importance"]["features"])
    write_csv(os.path.join(out_dir, "importance.csv"), ["model", "feature", "importance", "raw"], rows)
    rows = []
    for m in report["models"]:
        for sg in m["subgroup_importance"]:
            for b in sg["bins"]:
                rows.append((m["kind"], sg["target"], sg["grouping"], b["bin"], b["n"], b["importance"], b["reliable"]))
    write_csv(os.path.join(out_dir, "subgroup_importance.csv"),
              ["model", "target", "grouping", "bin", "n", "importance", "reliable"], rows)
    rows = []
    for m in report["models"]:
        rows.extend((m["kind"], p["threshold"], p["precision"], p["recall"], p["roi"], p["missed_savings"])
                    for p in m["roi_sensitivity"])
    write_csv(os.path.join(out_dir, "roi_sensitivity.csv"),
              ["model", "threshold", "precision", "recall", "roi", "missed_savings"], rows)
    write_json(os.path.join(out_dir, REPORT_FILE), report)


def _pct(x):
    return "n/a" if x is None else f"{100 * x:.1f}%"


def format_summary(report):
    lines = [f"{'Model':<20}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1':>8}{'ROI':>9}"]
    for m in report["models"]:
        lines.append(
            f"{m['kind']:<20}{_pct(m['accuracy']):>10}{_pct(m['precision']):>11}"
            f"{_pct(m['recall']):>9}{_pct(m['f1']):>8}{_pct(m['roi']):>9}"
        )
    lines.append(f"majority-class baseline accuracy: {_pct(report['majority_baseline_accuracy'])}")
    return "\n".join(lines)


def load_report(path):
    if os.path.isdir(path):
        path = os.path.join(path, REPORT_FILE)
    if not os.path.isfile(path):
        raise ConfigError(f"report not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    if report.get("format_version") != REPORT_VERSION:
        raise ConfigError(f"unsupported report version {report.get('format_version')!r}")
    return report


def recompute_roi(report, costs):
    out = []
    for m in report["models"]:
        c = m["confusion"]
        cm = evaluation.ConfusionMatrix(c["tp"], c["fp"], c["fn"], c["tn"])
        out.append(roi.roi_from_confusion(cm, costs, m["kind"]))
    return out


# --- commands ----------------------------------------------------------------------------


def cmd_generate(args):
    cfg = load_config(args.config)
    gen = dict(cfg.get("generator", {}))
    if args.seed is not None:
        gen["seed"] = args.seed
    try:
        gcfg = synthgen.GeneratorConfig.from_dict(gen)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid generator config: {exc}") from exc
    out = args.out or cfg.get("data_dir") or DEFAULTS["data_dir"]
    try:
        manifest = synthgen.generate_to_dir(gcfg, out)
    except synthgen.InfeasibleCorrelations as exc:
        raise ConfigError(str(exc)) from exc
    except Exception as exc:  # noqa: BLE001
        raise StageError("generate", exc) from exc
    n_elig = sum(p.eligible for p in manifest.patients)
    print(f"wrote {len(ingest.TABLE_NAMES)} tables and {synthgen.MANIFEST_FILE} to {out}")
    for table, count in manifest.counts.items():
        print(f"  {table:<16}{count:>9}")
    print(f"eligible patients: {n_elig}")
    return 0


def cmd_ingest_check(args):
    cfg = resolve(args)
    stage = _Stages()
    ds = stage("ingest", ingest.load_dataset, cfg["data_dir"], workers=cfg["workers"])
    for table, count in ds.counts().items():
        print(f"{table:<16}{count:>9}")
    manifest_path = os.path.join(cfg["data_dir"], synthgen.MANIFEST_FILE)
    if os.path.isfile(manifest_path):
        rep = stage("manifest_check", synthgen.manifest_check, cfg["data_dir"], manifest_path, cfg["_cohort"])
        print(f"manifest check: {len(rep.mismatches)} mismatch(es) over {rep.n_patients} patients")
        for m in rep.mismatches[:20]:
            print(f"  {m.patient_id} {m.field}: expected {m.expected!r}, got {m.actual!r}")
        return 0 if rep.ok else 1
    return 0


def cmd_cohort(args):
    cfg = resolve(args)
    out = args.out or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    stage = _Stages()
    _, fm = _load_cohort(cfg, stage)
    path = os.path.join(out, "cohort.csv")
    stage("write_cohort", cohort.write_cohort_csv, path, fm)
    print(f"{fm.y.size} eligible patients, {int(fm.y.sum())} with an outcome-window hospitalization -> {path}")
    return 0


def cmd_run(args):
    cfg = resolve(args)
    run_pipeline(cfg, args.out or cfg["output_dir"])
    return 0


def cmd_roi(args):
    report = load_report(args.report)
    costs = dict(report.get("costs", {}))
    cfg_costs = load_config(args.config).get("costs", {}) if args.config else {}
    costs.update(cfg_costs)
    for flag, key in (("preventive_cost", "preventive_cost_5yr"), ("hosp_cost", "avg_hospitalization_cost"), ("risk_reduction", "risk_reduction")):
        if getattr(args, flag) is not None:
            costs[key] = getattr(args, flag)
    try:
        assumptions = roi.CostAssumptions(**{f.name: costs[f.name] for f in fields(roi.CostAssumptions) if f.name in costs})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    results = recompute_roi(report, assumptions)
    print(f"{'Model':<20}{'Flagged':>9}{'TP':>6}{'Precision':>11}{'ROI':>9}")
    for r in results:
        precision = r.n_true_positive / r.n_flagged if r.n_flagged else None
        print(f"{r.model_kind:<20}{r.n_flagged:>9}{r.n_true_positive:>6}{_pct(precision):>11}{_pct(r.roi):>9}")
    if args.out:
        write_json(args.out, {"costs": assumptions.to_dict(), "models": [r.to_dict() for r in results]})
    return 0


def cmd_report(args):
    report = load_report(args.report)
    print(format_summary(report))
    for m in report["models"]:
        top = ", ".join(f"{f['feature']} {f['importance']:.3f}" for f in m["importance"]["features"][:3])
        print(f"{m['kind']}: best {m['best_params']} (cv {m['cv_best_score']:.3f}); top features: {top}")
        for c in m["counterfactuals"]:
            print(f"  {c['feature']} {c['baseline']:g} -> {c['treated']:g}: risk reduction {_pct(c['risk_reduction'])}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hosprisk", description="Hospitalization-risk pipeline over Synthea-style EHR exports.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int)
        return sp

    def pipeline(sp):
        sp.add_argument("--data", help="directory holding the eleven CSV tables")
        sp.add_argument("--models", help="comma-separated model kinds")
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--workers", type=int)
        costs(sp)
        return sp

    def costs(sp):
        sp.add_argument("--preventive-cost", type=float, dest="preventive_cost")
        sp.add_argument("--hosp-cost", type=float, dest="hosp_cost")
        sp.add_argument("--risk-reduction", type=float, dest="risk_reduction")

    common(sub.add_parser("generate", help="write a synthetic corpus and manifest"), "corpus directory").set_defaults(func=cmd_generate)
    pipeline(common(sub.add_parser("ingest-check", help="validate the input tables"))).set_defaults(func=cmd_ingest_check)
    pipeline(common(sub.add_parser("cohort", help="build cohort.csv"))).set_defaults(func=cmd_cohort)
    pipeline(common(sub.add_parser("run", help="full pipeline, writes report.json and plot data"))).set_defaults(func=cmd_run)

    sp = sub.add_parser("roi", help="recompute ROI from a report under new cost assumptions")
    sp.add_argument("report", help="report.json or the directory holding it")
    sp.add_argument("--config", help="JSON configuration whose costs section applies")
    sp.add_argument("--out", help="write the recomputed ROI as JSON")
    costs(sp)
    sp.set_defaults(func=cmd_roi)

    sp = sub.add_parser("report", help="print the summary tables of a report")
    sp.add_argument("report", help="report.json or the directory holding it")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ingest.IngestError, cohort.EmptyCohort) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
