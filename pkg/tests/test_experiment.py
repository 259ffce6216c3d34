import json
import os
import subprocess
import sys

import numpy as np
import pytest

from safebayes.experiment import (
    ConfigError,
    ExperimentConfig,
    config_to_dict,
    load_config,
    run_matrix,
    run_one,
    sweep_eta,
    write_outputs,
)
from safebayes.seeds import mix64


SMALL = {
    "experiment_id": "small",
    "model": {"pmax": 5, "b_formula": "exact"},
    "generator": {},
    "grid": {"kappa_step": 1.0, "kappa_max": 3},
    "methods": ["bayes", "r_log_safebayes", "empirical_bayes"],
    "n_max": 25,
    "eval_ns": [0, 10, 25],
    "runs": 2,
    "base_seed": 42,
}


def test_mix64_is_deterministic_and_spreads():
    a = mix64(42, 0)
    assert a == mix64(42, 0)
    seeds = {mix64(42, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2**64 for s in seeds)


def test_minimal_config_fills_defaults():
    cfg = load_config({})
    assert cfg.model.pmax == 50
    assert cfg.grid.kappa_max == 8
    assert cfg.generator.easy_prob == 0.5
    assert cfg.methods == ("bayes", "r_log_safebayes", "i_log_safebayes")


def test_config_rejects_unknown_keys_with_path():
    with pytest.raises(ConfigError, match="generator.easyprob"):
        load_config({"generator": {"easyprob": 0.5}})
    with pytest.raises(ConfigError, match="model.pmax"):
        load_config({"model": {"pmax": -1}})
    with pytest.raises(ConfigError, match="grid"):
        load_config({"grid": {"kappa_step": -1}})
    with pytest.raises(ConfigError, match="methods"):
        load_config({"methods": ["bayess"]})


def test_config_enforces_method_variance_compatibility():
    with pytest.raises(ConfigError, match="r_square"):
        load_config({"methods": ["r_square_safebayes"]})
    with pytest.raises(ConfigError, match="r_log"):
        load_config({"model": {"variance": {"kind": "fixed", "sigma2": 0.025}}, "methods": ["r_log_safebayes"]})


def test_config_roundtrip():
    cfg = load_config(SMALL)
    assert load_config(config_to_dict(cfg)) == cfg


def test_zero_sample_rows_reflect_prior():
    cfg = load_config({**SMALL, "n_max": 0, "eval_ns": [0], "runs": 1})
    rows = run_matrix(cfg)
    assert {r.method for r in rows} == {"bayes", "r_log_safebayes", "empirical_bayes"}
    for r in rows:
        assert r.n == 0
        assert r.map_order == 0
        assert r.sq_risk == pytest.approx(0.045)  # E[Y^2] of the wrong-model truth
        assert r.overconfidence is None  # prior variance undefined at a0 = 1
        if r.method != "bayes":
            assert r.eta_hat == 1.0  # empty objective ties break to the grid max


def test_runs_are_deterministic_and_thread_count_invariant(tmp_path):
    cfg = load_config(SMALL)
    rows1 = run_matrix(cfg, threads=1)
    rows2 = run_matrix(cfg, threads=2)
    assert rows1 == rows2
    out1, out2 = tmp_path / "a", tmp_path / "b"
    write_outputs(rows1, str(out1), cfg)
    write_outputs(rows2, str(out2), cfg)
    for name in ("rows.csv", "aggregate.csv", "manifest.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_different_seed_changes_rows():
    cfg = load_config(SMALL)
    import dataclasses

    other = dataclasses.replace(cfg, base_seed=43)
    assert run_matrix(cfg) != run_matrix(other)


def test_written_csv_shape_and_na(tmp_path):
    cfg = load_config(SMALL)
    rows = run_matrix(cfg)
    write_outputs(rows, str(tmp_path), cfg)
    lines = (tmp_path / "rows.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header == [
        "experiment_id",
        "run",
        "n",
        "method",
        "eta_hat",
        "sq_risk",
        "map_order",
        "overconfidence",
        "cum_bayes_log",
        "cum_r_log",
        "cum_i_log",
        "delta_cum",
        "hyper_margin",
        "b_formula",
    ]
    assert len(lines) == 1 + len(rows)
    n0 = [l for l in lines[1:] if l.split(",")[2] == "0"]
    assert all(l.split(",")[7] == "NA" for l in n0)  # overconfidence NA at the prior
    # aggregate file carries geometric-mean eta and matches runs count
    agg = (tmp_path / "aggregate.csv").read_text().splitlines()
    assert agg[0].startswith("n,method,runs,eta_hat_geomean")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["base_seed"] == 42 and manifest["config"]["n_max"] == 25


def test_empty_rows_yield_header_only(tmp_path):
    cfg = load_config(SMALL)
    write_outputs([], str(tmp_path), cfg)
    assert (tmp_path / "rows.csv").read_text().count("\n") == 1
    assert (tmp_path / "aggregate.csv").read_text().count("\n") == 1


def test_geometric_mean_aggregation(tmp_path):
    from safebayes.experiment import ResultRow, write_aggregate_csv

    rows = [
        ResultRow("x", r, 10, "m", eta, 0.1, 1, None, None, None, None, None, None, "paper")
        for r, eta in enumerate([0.5, 0.5, 1.0])
    ]
    path = tmp_path / "agg.csv"
    write_aggregate_csv(rows, str(path))
    line = path.read_text().splitlines()[1].split(",")
    assert float(line[3]) == pytest.approx(2.0 ** (-2.0 / 3.0))


def test_map_and_cesaro_variant_rows():
    cfg = load_config(
        {
            **SMALL,
            "methods": ["bayes", "r_log_safebayes", "map_variants", "cesaro_variants"],
            "runs": 1,
            "eval_ns": [10],
        }
    )
    rows = run_matrix(cfg)
    methods = {r.method for r in rows}
    assert {"bayes_map", "r_log_safebayes_map", "bayes_cesaro", "r_log_safebayes_cesaro"} <= methods
    ces = [r for r in rows if r.method == "bayes_cesaro"][0]
    assert ces.sq_risk is not None and ces.map_order is None


def test_baseline_rows():
    cfg = load_config({**SMALL, "methods": ["bayes", "baselines"], "runs": 1, "eval_ns": [20]})
    rows = run_matrix(cfg)
    base = {r.method: r for r in rows if r.method.startswith("baseline_")}
    assert set(base) == {f"baseline_{m}" for m in ("AICc", "BIC", "kfoldCV", "LOOCV", "GCV")}
    for r in base.values():
        assert r.sq_risk is not None and 0 <= r.map_order <= 5


def test_centering_leaves_risks_statistically_unchanged():
    base = {**SMALL, "methods": ["bayes"], "runs": 12, "n_max": 40, "eval_ns": [40], "model": {"pmax": 5}}
    rows_raw = run_matrix(load_config({**base, "centering": False}))
    rows_cen = run_matrix(load_config({**base, "centering": True}))
    r0 = np.array([r.sq_risk for r in rows_raw])
    r1 = np.array([r.sq_risk for r in rows_cen])
    diff = r1 - r0
    se = diff.std(ddof=1) / np.sqrt(len(diff))
    assert abs(diff.mean()) <= max(2 * se, 1e-4)


def test_sweep_eta_accumulates_all_grid_points():
    cfg = load_config({**SMALL, "runs": 2})
    acc = sweep_eta(cfg, n=15)
    assert len(acc) == len(cfg.grid.values)
    for eta, vals in acc.items():
        assert len(vals["r_log"]) == 2
        assert np.all(np.asarray(vals["r_log"]) >= np.asarray(vals["mix"]) - 1e-9)
        assert np.all(np.asarray(vals["mix"]) >= np.asarray(vals["bayes"]) - 1e-9)
    with pytest.raises(ConfigError):
        sweep_eta(cfg, n=100)


# -- CLI ------------------------------------------------------------------------


def _run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "safebayes.cli", *args],
        capture_output=True,
        text=True,
    )


def test_cli_run_and_determinism(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({**SMALL, "runs": 1, "n_max": 15, "eval_ns": [15]}))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    r1 = _run_cli("run", "--config", str(cfg_path), "--out", str(out1))
    assert r1.returncode == 0, r1.stderr
    r2 = _run_cli("run", "--config", str(cfg_path), "--out", str(out2), "--threads", "2")
    assert r2.returncode == 0, r2.stderr
    assert (out1 / "rows.csv").read_bytes() == (out2 / "rows.csv").read_bytes()


def test_cli_config_error_exit_code(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"model": {"pmax": -3}}))
    r = _run_cli("run", "--config", str(cfg_path), "--out", str(tmp_path / "o"))
    assert r.returncode == 1
    assert "pmax" in r.stderr


def test_cli_bernoulli(tmp_path):
    r = _run_cli("bernoulli", "--theta-star", "0.6", "--n-list", "20", "--trials", "500")
    assert r.returncode == 0
    assert "0.6 20 500" in r.stdout


def test_cli_sweep(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({**SMALL, "runs": 1, "n_max": 12, "eval_ns": [12]}))
    r = _run_cli("sweep-eta", "--config", str(cfg_path), "--n", "12", "--out", str(tmp_path))
    assert r.returncode == 0, r.stderr
    text = (tmp_path / "sweep_eta.csv").read_text()
    assert text.startswith("eta,cum_r_log_mean")
    assert len(text.splitlines()) == 1 + 4  # grid {1, 1/2, 1/4, 1/8}


def test_shipped_configs_are_valid():
    here = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in os.listdir(here):
        with open(os.path.join(here, name)) as fh:
            cfg = load_config(json.load(fh))
        assert cfg.runs >= 1
    wrong50 = load_config(json.load(open(os.path.join(here, "wrong50.json"))))
    assert wrong50.model.pmax == 50
    assert wrong50.grid.kappa_step == pytest.approx(1.0 / 3.0)
    assert wrong50.grid.kappa_max == 8
    assert wrong50.generator.easy_prob == 0.5
