import json
import os
import shutil
import subprocess
import sys

import pytest

from hosprisk import cli

FAST_GRIDS = {
    "logreg": {"c": [0.1, 1.0]},
    "gradient_boosting": {"n_trees": [20], "max_depth": [2]},
    "random_forest": {"n_trees": [10], "max_depth": [4]},
    "mlp": {"units_1": [8], "units_2": [4], "epochs": [15]},
}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory, corpus200):
    data, _ = corpus200
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.json"
    config.write_text(json.dumps({"data_dir": str(data), "seed": 3, "cv_folds": 3, "importance_repeats": 3, "grids": FAST_GRIDS}))
    out = root / "out"
    assert cli.main(["run", "--config", str(config), "--out", str(out)]) == 0
    return config, out


def test_generate_writes_tables_and_manifest(tmp_path, capsys):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"generator": {"n_patients": 20}}))
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "4"]) == 0
    files = sorted(os.listdir(tmp_path / "a"))
    assert len([f for f in files if f.endswith(".csv")]) == 11 and "manifest.json" in files
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"]) == 0
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "eligible patients" in capsys.readouterr().out


def test_missing_config_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert cli.main(["generate", "--config", str(missing)]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sede": 3}))
    assert cli.main(["run", "--config", str(cfg)]) == 2


def test_bad_generator_config_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"generator": {"base_rate": 2.0}}))
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_ingest_check(corpus50, capsys):
    path, _ = corpus50
    assert cli.main(["ingest-check", "--data", str(path)]) == 0
    assert "0 mismatch(es)" in capsys.readouterr().out


def test_ingest_check_missing_table_exit_1(tmp_path):
    (tmp_path / "patients.csv").write_text("Id\n")
    assert cli.main(["ingest-check", "--data", str(tmp_path)]) == 1


def test_cohort_command(corpus50, tmp_path):
    path, manifest = corpus50
    assert cli.main(["cohort", "--data", str(path), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "cohort.csv") as fh:
        assert sum(1 for _ in fh) == len(manifest.eligible_ids) + 1


def test_run_report_schema(small_run):
    _, out = small_run
    report = json.loads((out / "report.json").read_text())
    assert report["format_version"] == 1 and len(report["config_hash"]) == 64
    assert [m["kind"] for m in report["models"]] == list(FAST_GRIDS)
    for m in report["models"]:
        for key in ("accuracy", "precision", "recall", "f1", "best_params", "roi", "confusion"):
            assert key in m
        cm = m["confusion"]
        assert cm["tp"] + cm["fp"] + cm["fn"] + cm["tn"] == report["split"]["n_test"]
    for name in ("cohort.csv", "correlations.csv", "importance.csv", "subgroup_importance.csv", "roi_sensitivity.csv"):
        assert (out / name).stat().st_size > 0
    assert not (out / "STALE").exists()


def test_rerun_is_byte_identical_across_workers(small_run, tmp_path):
    config, out = small_run
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path), "--workers", "3"]) == 0
    assert (tmp_path / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_models_flag(small_run, tmp_path):
    config, _ = small_run
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path), "--models", "logreg"]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert [m["kind"] for m in report["models"]] == ["logreg"]


def test_invalid_grid_is_config_error(small_run, tmp_path):
    config, _ = small_run
    bad = tmp_path / "bad.json"
    cfg = json.loads(config.read_text())
    cfg["grids"] = {"logreg": {"c": [-1.0]}}
    bad.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path), "--models", "logreg"]) == 2


def test_failed_stage_marks_outputs_stale(corpus50, tmp_path, capsys):
    data = tmp_path / "data"
    shutil.copytree(corpus50[0], data)
    with open(data / "patients.csv", "a") as fh:
        fh.write("broken,not-a-date,,x,y,F,MA,1,1\n")
    out = tmp_path / "out"
    out.mkdir()
    (out / "report.json").write_text("{}")
    assert cli.main(["run", "--data", str(data), "--out", str(out)]) == 1
    assert "ingest" in (out / "STALE").read_text()
    assert "ingest" in capsys.readouterr().err


def test_report_command(small_run, capsys):
    _, out = small_run
    assert cli.main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "Accuracy" in text and "logreg" in text


def fake_report(tmp_path, confusions):
    report = {
        "format_version": 1,
        "costs": {"preventive_cost_5yr": 2580.0, "avg_hospitalization_cost": 10924.0, "risk_reduction": 0.377},
        "models": [{"kind": k, "confusion": dict(zip(("tp", "fp", "fn", "tn"), cm))} for k, cm in confusions.items()],
    }
    path = tmp_path / "report.json"
    path.write_text(json.dumps(report))
    return path


def roi_column(output):
    return [line.split()[-1] for line in output.strip().splitlines()[1:]]


def test_roi_command_default_costs(tmp_path, capsys):
    path = fake_report(tmp_path, {"logreg": (77, 23, 10, 90)})
    assert cli.main(["roi", str(path)]) == 0
    assert roi_column(capsys.readouterr().out) == ["22.9%"]


def test_roi_zero_risk_reduction(tmp_path, capsys):
    path = fake_report(tmp_path, {"logreg": (77, 23, 10, 90), "mlp": (50, 10, 3, 90)})
    assert cli.main(["roi", str(path), "--risk-reduction", "0"]) == 0
    assert roi_column(capsys.readouterr().out) == ["-100.0%", "-100.0%"]


def test_roi_doubled_preventive_cost(tmp_path, capsys):
    path = fake_report(tmp_path, {"logreg": (77, 23, 10, 90)})
    out = tmp_path / "roi.json"
    assert cli.main(["roi", str(path), "--preventive-cost", "5160", "--out", str(out)]) == 0
    (entry,) = json.loads(out.read_text())["models"]
    assert entry["roi"] == pytest.approx(0.77 * 0.798 - 1, abs=5e-4)


def test_roi_missing_report_exit_2(tmp_path):
    assert cli.main(["roi", str(tmp_path / "missing.json")]) == 2


def test_binary_exit_codes(tmp_path):
    run = lambda *a: subprocess.run([sys.executable, "-m", "hosprisk", *a], capture_output=True, text=True)
    assert run("--version").returncode == 0
    assert run("report", str(tmp_path / "none.json")).returncode == 2
    assert run("frobnicate").returncode == 2
