import json
import os

import numpy as np
import pytest

from gseat.cli import (
    ExperimentConfig,
    bench_backends,
    main,
    rows_to_csv,
    run_experiment,
)
from gseat import ConfigError, load_bundle


SBM_SPEC = {"kind": "sbm", "block_sizes": [30, 30], "p_in": 0.25, "p_out": 0.03,
            "feature_dim": 6, "feature_shift": 0.9}

SWEEP_CONFIG = {
    "dataset": SBM_SPEC,
    "model": "gcn",
    "methods": ["natural", "at_gse"],
    "attack": {"kind": "rbcd", "budgets": [0.1], "block_size": 200,
               "iterations": 5, "lr": 100.0},
    "seeds": [0, 1],
    "per_class": 8,
    "test_frac": 0.1,
    "train": {"epochs": 12, "warmup": 4, "lr": 0.2, "momentum": 0.9,
              "inner_steps": 1},
}


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SWEEP_CONFIG, "seeds": []})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SWEEP_CONFIG, "methods": ["nope"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SWEEP_CONFIG, "model": "mlp"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SWEEP_CONFIG, "attack": {"kind": "rbcd"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SWEEP_CONFIG, "bogus_key": 1})
    single = ExperimentConfig.from_dict({**SWEEP_CONFIG, "methods": "natural"})
    assert single.methods == ("natural",)


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep_rows():
    cfg = ExperimentConfig.from_dict(SWEEP_CONFIG)
    return run_experiment(cfg)


def test_sweep_row_shape(sweep_rows):
    rows, metric_cols = sweep_rows
    assert metric_cols == ["clean_acc", "adv_10pct"]
    per_seed = [r for r in rows if isinstance(r["seed"], int)]
    assert len(per_seed) == 4  # 2 seeds x 2 methods
    assert all(r["status"] == "ok" for r in per_seed)
    aggregates = [r for r in rows if r["seed"] in ("mean", "std")]
    assert len(aggregates) == 4  # mean+std per method


def test_sweep_aggregates_recomputable(sweep_rows):
    rows, metric_cols = sweep_rows
    csv_text = rows_to_csv(rows, metric_cols)
    lines = csv_text.strip().split("\n")
    header = lines[0].split(",")
    parsed = [dict(zip(header, line.split(","))) for line in lines[1:]]
    for method in ("natural", "at_gse"):
        per_seed = [r for r in parsed if r["method"] == method and r["seed"].isdigit()]
        mean_row = next(r for r in parsed if r["method"] == method and r["seed"] == "mean")
        std_row = next(r for r in parsed if r["method"] == method and r["seed"] == "std")
        for col in metric_cols:
            values = np.array([float(r[col]) for r in per_seed])
            assert float(mean_row[col]) == pytest.approx(values.mean(), abs=1e-6)
            assert float(std_row[col]) == pytest.approx(values.std(), abs=1e-6)


def test_sweep_single_seed_natural_no_attack():
    cfg = ExperimentConfig.from_dict({
        "dataset": SBM_SPEC, "methods": ["natural"], "seeds": [0],
        "per_class": 8, "test_frac": 0.1,
        "train": {"epochs": 6, "warmup": 0, "lr": 0.2},
    })
    rows, metric_cols = run_experiment(cfg)
    assert metric_cols == ["clean_acc"]
    per_seed = [r for r in rows if isinstance(r["seed"], int)]
    assert len(per_seed) == 1 and "clean_acc" in per_seed[0]


# ---------------------------------------------------------------------------
# CLI end to end
# ---------------------------------------------------------------------------

def test_cli_sweep_byte_identical(tmp_path):
    cfg_path = tmp_path / "sweep.json"
    small = dict(SWEEP_CONFIG)
    small["methods"] = ["natural"]
    small["train"] = {"epochs": 8, "warmup": 0, "lr": 0.2}
    cfg_path.write_text(json.dumps(small))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg_path), "--out", str(out_a)]) == 0
    assert main(["sweep", "--config", str(cfg_path), "--out", str(out_b)]) == 0
    csv_a = (out_a / "results.csv").read_bytes()
    csv_b = (out_b / "results.csv").read_bytes()
    assert csv_a == csv_b


def test_cli_gen_sbm_and_bundle_train_eval(tmp_path):
    bundle_dir = tmp_path / "bundle"
    rc = main(["gen-sbm", "--blocks", "30,30", "--p-in", "0.25", "--p-out", "0.03",
               "--dim", "6", "--shift", "0.9", "--seed", "4", "--out", str(bundle_dir)])
    assert rc == 0
    loaded = load_bundle(bundle_dir)
    assert loaded.n == 60

    train_cfg = {
        "dataset": {"kind": "bundle", "path": str(bundle_dir)},
        "model": "gcn",
        "method": "natural",
        "per_class": 8,
        "test_frac": 0.1,
        "train": {"epochs": 10, "warmup": 0, "lr": 0.2},
    }
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(train_cfg))
    run_dir = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--seed", "2",
                 "--out", str(run_dir)]) == 0
    assert (run_dir / "params.bin").exists()
    assert (run_dir / "report.json").exists()

    attack_cfg = {
        "dataset": {"kind": "bundle", "path": str(bundle_dir)},
        "checkpoint": str(run_dir / "params.bin"),
        "attack": {"budget_ratio": 0.1, "block_size": 200, "iterations": 4, "lr": 100.0},
    }
    attack_path = tmp_path / "attack.json"
    attack_path.write_text(json.dumps(attack_cfg))
    pert_path = tmp_path / "pert.txt"
    assert main(["attack", "--config", str(attack_path), "--out", str(pert_path)]) == 0
    assert pert_path.exists()

    eval_cfg = {
        "dataset": {"kind": "bundle", "path": str(bundle_dir)},
        "checkpoint": str(run_dir / "params.bin"),
        "perturbation": str(pert_path),
    }
    eval_path = tmp_path / "eval.json"
    eval_path.write_text(json.dumps(eval_cfg))
    out_json = tmp_path / "metrics.json"
    assert main(["eval", "--config", str(eval_path), "--out", str(out_json)]) == 0
    payload = json.loads(out_json.read_text())
    assert 0.0 <= payload["clean_acc"] <= 1.0
    assert 0.0 <= payload["adv_acc"] <= 1.0


def test_cli_spectrum_schemas(tmp_path):
    cfg_path = tmp_path / "spec.json"
    cfg_path.write_text(json.dumps({"dataset": SBM_SPEC, "budgets": [0.05, 0.1]}))
    out_dir = tmp_path / "spectra"
    assert main(["spectrum", "--config", str(cfg_path), "--seed", "1",
                 "--out", str(out_dir)]) == 0
    clean = (out_dir / "spectrum_clean.csv").read_text().splitlines()
    assert clean[0] == "index,sigma"
    assert clean[1].startswith("0,")
    ngse = (out_dir / "ngse.csv").read_text().splitlines()
    assert ngse[0] == "budget,ngse"
    assert len(ngse) == 3


def test_cli_spectrum_empty_budgets(tmp_path):
    cfg_path = tmp_path / "spec.json"
    cfg_path.write_text(json.dumps({"dataset": SBM_SPEC, "budgets": []}))
    out_dir = tmp_path / "spectra"
    assert main(["spectrum", "--config", str(cfg_path), "--out", str(out_dir)]) == 0
    names = sorted(os.listdir(out_dir))
    assert names == ["ngse.csv", "spectrum_clean.csv"]


def test_cli_bench_small(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--n", "50", "--k", "10", "--reps", "3",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "backend,median_seconds"
    assert len(lines) == 4  # three backends complete; no ordering asserted


def test_bench_reps_stability():
    # medians from 3 and 9 reps agree within 50% (plus a clock-noise floor)
    a = bench_backends(400, 20, 3, seed=0)
    b = bench_backends(400, 20, 9, seed=0)
    med_a = {r["backend"]: r["median_seconds"] for r in a}
    med_b = {r["backend"]: r["median_seconds"] for r in b}
    for backend in med_a:
        hi, lo = max(med_a[backend], med_b[backend]), min(med_a[backend], med_b[backend])
        assert hi - lo <= max(0.5 * lo, 5e-4), (backend, med_a, med_b)


def test_sweep_threads_match_serial(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "dataset": SBM_SPEC, "methods": ["natural"], "seeds": [0, 1, 2],
        "per_class": 8, "test_frac": 0.1,
        "train": {"epochs": 6, "warmup": 0, "lr": 0.2},
    })
    rows_serial, cols = run_experiment(cfg, threads=1)
    rows_threaded, _ = run_experiment(cfg, threads=3)
    assert rows_to_csv(rows_serial, cols) == rows_to_csv(rows_threaded, cols)


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_exit_code_config_error(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SWEEP_CONFIG, "model": "mlp"}))
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_exit_code_data_error(tmp_path):
    bundle = tmp_path / "bundle"
    bundle.mkdir()
    (bundle / "meta.json").write_text(json.dumps({"n": 3, "d": 2, "C": 2}))
    (bundle / "edges.txt").write_text("0 9\n")  # node id out of range
    (bundle / "features.csv").write_text("0,0\n0,0\n0,0\n")
    (bundle / "labels.csv").write_text("0\n1\n0\n")
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({
        "dataset": {"kind": "bundle", "path": str(bundle)},
        "train": {"epochs": 1}, "per_class": 1, "test_frac": 0.0,
    }))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 3


def test_exit_code_numeric_error(tmp_path):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({
        "dataset": SBM_SPEC,
        "per_class": 8,
        "test_frac": 0.1,
        "train": {"epochs": 40, "warmup": 0, "lr": 1e14},
    }))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 4


def test_exit_code_bad_gse_log_env(monkeypatch, tmp_path):
    monkeypatch.setenv("GSE_LOG", "verbose")
    assert main(["bench", "--n", "30", "--k", "5", "--reps", "1"]) == 2


def test_gse_log_env_accepted(monkeypatch):
    monkeypatch.setenv("GSE_LOG", "debug")
    assert main(["bench", "--n", "30", "--k", "5", "--reps", "1"]) == 0
