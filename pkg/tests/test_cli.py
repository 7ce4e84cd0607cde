import argparse
import json

import numpy as np
import pytest

from mic_hawkes import cli, experiments, io
from mic_hawkes.layout import validate_layout
from mic_hawkes.model import KernelSpec, ModelParams

from conftest import DATA


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.mark.parametrize("text,seconds", [("3", 3.0), ("6min", 360.0), ("10h", 36000.0), ("2.5d", 216000.0),
                                          ("45s", 45.0)])
def test_parse_duration(text, seconds):
    assert cli.parse_duration(text) == seconds


def test_parse_duration_rejects_garbage():
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_duration("6 fortnights")


def test_usage_errors_exit_2(capsys):
    assert run("bogus") == 2
    assert run("fit") == 2
    assert run("--help") == 0


def test_data_errors_exit_3(tmp_path):
    assert run("fit", "--events", tmp_path / "missing.csv", "--out", tmp_path / "o") == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("user,cascade,timestamp\n0,0,-4\n")
    assert run("fit", "--events", bad, "--out", tmp_path / "o") == 3


def test_numerical_failure_exits_4(tmp_path):
    critical = ModelParams(np.array([[0.1]]), np.eye(1), np.array([[1.0]]), KernelSpec(1.0))
    io.write_params(tmp_path / "p.json", critical)
    assert run("moments", "--params", tmp_path / "p.json", "--t-max", 5, "--out", tmp_path / "m") == 4


def test_simulate_is_reproducible(tmp_path):
    args = ["--users", 6, "--cascades", 2, "--T", 50, "--edge-prob", 0.3, "--tau", 1, "--beta", 2, "--seed", 5]
    assert run("simulate", *args, "--out", tmp_path / "a") == 0
    assert run("simulate", *args, "--out", tmp_path / "b") == 0
    for name in ("events.csv", "graph.csv", "params.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = io.read_json(tmp_path / "a" / "manifest.json", "mic-hawkes/manifest")
    assert manifest["seed"] == 5 and manifest["command"] == "simulate"
    assert set(manifest["outputs"]) == {str(tmp_path / "a" / n) for n in ("events.csv", "graph.csv", "params.json")}


def test_simulate_with_sigma_file(tmp_path):
    (tmp_path / "sigma.json").write_text(json.dumps([[1, 0, 0], [0.71, 0.29, 0], [0, 0, 1]]))
    assert run("simulate", "--users", 10, "--T", 30, "--sigma", tmp_path / "sigma.json", "--out", tmp_path / "s") == 0
    p = io.read_params(tmp_path / "s" / "params.json")
    assert p.Sigma[1, 0] == 0.71 and p.beta == 33.37 and p.tau == 3.0


def pipeline(out):
    ev, gr = DATA / "events.csv", DATA / "graph.csv"
    assert run("crossval", "--events", ev, "--graph", gr, "--beta-grid", "0.5,2", "--tau-grid", "1,2",
               "--out", out / "cv") == 0
    best = io.read_json(out / "cv" / "crossval.json")["best"]
    assert run("fit", "--events", ev, "--graph", gr, "--beta", best["beta"], "--tau", best["tau"],
               "--train-fraction", 0.8, "--out", out / "fit") == 0
    assert run("eval", "--params", out / "fit" / "params.json", "--events", ev, "--bins", 20,
               "--replications", 5, "--out", out / "eval") == 0
    assert run("moments", "--params", out / "fit" / "params.json", "--t-max", 20, "--out", out / "mom") == 0
    assert run("viz-export", "--params", out / "fit" / "params.json", "--events", ev, "--out", out / "viz") == 0


ARTIFACTS = ["cv/crossval.json", "fit/params.json", "fit/trajectory.json", "eval/metrics.json",
             "mom/moments.json", "viz/layout.json"]


def test_pipeline_on_bundled_fixture_is_deterministic(tmp_path):
    pipeline(tmp_path / "one")
    pipeline(tmp_path / "two")
    for rel in ARTIFACTS:
        assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "two" / rel).read_bytes(), rel
        assert (tmp_path / "one" / rel).parent.joinpath("manifest.json").exists()
    metrics = io.read_json(tmp_path / "one" / "eval" / "metrics.json", "mic-hawkes/metrics")
    assert np.isfinite(metrics["test_loglik"])
    validate_layout(io.read_json(tmp_path / "one" / "viz" / "layout.json"), 5, 2)


def test_sweep_emits_complete_table(tmp_path):
    assert run("sweep", "--betas", "0.01,5", "--sigma21", "0,1", "--replications", 1, "--users", 8, "--T", 60,
               "--edge-prob", 0.15, "--out", tmp_path / "sw") == 0
    doc = io.read_json(tmp_path / "sw" / "sweep.json", "mic-hawkes/sweep")
    assert doc["complete"] and len(doc["cells"]) == 4
    assert all(c["replications"] + c["failures"] == 1 for c in doc["cells"])
    rows = (tmp_path / "sw" / "sweep.csv").read_text().strip().splitlines()
    assert rows[0].startswith("beta,sigma_21,replications") and len(rows) == 5


def test_sweep_keeps_partial_results_on_interrupt(tmp_path, monkeypatch):
    real = experiments.compare_models
    calls = {"n": 0}

    def flaky(cfg, **kw):
        calls["n"] += 1
        if calls["n"] > 1:
            raise KeyboardInterrupt
        return real(cfg, **kw)

    monkeypatch.setattr(experiments, "compare_models", flaky)
    code = run("sweep", "--betas", "0.01,5", "--sigma21", "0", "--replications", 1, "--users", 8, "--T", 60,
               "--edge-prob", 0.15, "--out", tmp_path / "sw")
    assert code == 130
    doc = io.read_json(tmp_path / "sw" / "sweep.json", "mic-hawkes/sweep")
    assert not doc["complete"] and len(doc["cells"]) == 1


def test_self_fit_beats_beta_zero_refit(tmp_path):
    # averaged over seeds: the generating beta scores at least as well as beta=0
    gaps = []
    for seed in range(10):
        out = tmp_path / str(seed)
        assert run("simulate", "--users", 5, "--cascades", 2, "--T", 150, "--edge-prob", 0.3, "--tau", 1,
                   "--beta", 4, "--seed", seed, "--out", out) == 0
        scores = []
        for beta in (4, 0):
            assert run("fit", "--events", out / "events.csv", "--graph", out / "graph.csv", "--tau", 1,
                       "--beta", beta, "--train-fraction", 0.8, "--out", out / f"fit{beta}") == 0
            assert run("eval", "--params", out / f"fit{beta}" / "params.json", "--events", out / "events.csv",
                       "--bins", 10, "--replications", 2, "--out", out / f"eval{beta}") == 0
            scores.append(io.read_json(out / f"eval{beta}" / "metrics.json")["test_loglik"])
        assert np.isfinite(scores).all()
        gaps.append(scores[0] - scores[1])
    assert np.mean(gaps) >= 0
