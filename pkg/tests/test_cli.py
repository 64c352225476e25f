import csv
import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest

from probrec.cli import classify_effect, main


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def reconc_rows(path, method="reconc"):
    return {(int(r["step"]), r["series"]): r for r in read_csv(path) if r["method"] == method}


@pytest.mark.parametrize(
    "args, expected",
    [((1.5, 1.3, 1.11), "strengthening"), ((18, 12, 14.44), "compromise"), ((2, 2, 2), "other"), ((1, 3, 4), "other")],
)
def test_classify_effect(args, expected):
    assert classify_effect(*args) == expected


def test_classify_effect_tolerance():
    assert classify_effect(1.5, 1.3, 1.29, tol=0.05) == "other"
    assert classify_effect(18, 12, 17.99, tol=0.05) == "other"


def test_enumerate_bernoulli(tmp_path, configs):
    code = main([
        "--mode", "enumerate", "--hierarchy", str(configs / "minimal_hierarchy.json"),
        "--forecasts", str(configs / "bernoulli_minimal.json"), "--out", str(tmp_path),
    ])
    assert code == 0
    rows = reconc_rows(tmp_path / "reconciled.csv")
    assert float(rows[0, "B1"]["mean"]) == pytest.approx(0.5172, abs=1e-4)
    assert float(rows[0, "B2"]["mean"]) == pytest.approx(0.4023, abs=1e-4)
    assert float(rows[0, "U"]["var"]) == pytest.approx(0.5567, abs=1e-4)
    base = reconc_rows(tmp_path / "reconciled.csv", "base")
    assert float(base[0, "U"]["mean"]) == pytest.approx(1.6)
    diag = read_csv(tmp_path / "diagnostics.csv")
    assert float(diag[0]["p_c"]) == pytest.approx(0.174, abs=1e-12)
    assert not (tmp_path / "scores.csv").exists()


def test_importance_two_regimes(tmp_path, configs):
    code = main([
        "--mode", "importance", "--hierarchy", str(configs / "minimal_hierarchy.json"),
        "--forecasts", str(configs / "poisson_regimes.json"), "--n-draws", "100000",
        "--seed", "3", "--out", str(tmp_path),
    ])
    assert code == 0
    diag = read_csv(tmp_path / "diagnostics.csv")
    assert [d["effect"] for d in diag] == ["strengthening", "compromise"]
    rows = reconc_rows(tmp_path / "reconciled.csv")
    assert float(rows[0, "U"]["mean"]) == pytest.approx(1.11, abs=0.05)
    assert float(rows[1, "U"]["mean"]) == pytest.approx(14.44, abs=0.05)


def test_gaussian_mode_with_obs(tmp_path, configs):
    obs = tmp_path / "obs.csv"
    obs.write_text("U,B1,B2\n1.5,0.5,1.0\n")
    out = tmp_path / "out"
    code = main([
        "--mode", "gaussian", "--hierarchy", str(configs / "minimal_hierarchy.json"),
        "--forecasts", str(configs / "gaussian_minimal.json"), "--obs", str(obs),
        "--n-draws", "2000", "--out", str(out),
    ])
    assert code == 0
    info = json.loads((out / "gaussian.json").read_text())[0]
    assert info["upper_mean"][0] == pytest.approx(2.0 * 2.0 / 5.0)
    assert info["weights"]["base"] == pytest.approx(0.4)
    scores = read_csv(out / "scores.csv")
    assert sum(r["metric"] == "ES" for r in scores) == 1
    assert {r["metric"] for r in scores} == {"ES", "IS", "SE", "AE"}
    for r in scores:
        float(r["base"]), float(r["reconc"]), float(r["skill"])


def test_step_failure_continues(tmp_path, configs, capsys):
    fc = tmp_path / "fc.json"
    fc.write_text(json.dumps({"steps": [
        {"upper": [{"family": "tabulated", "params": {"support": [5], "probs": [1.0]}}],
         "bottom": [{"family": "bernoulli", "params": {"p": 0.5}}] * 2},
        {"upper": [{"family": "poisson", "params": {"lambda": 1.0}}],
         "bottom": [{"family": "poisson", "params": {"lambda": 0.5}}] * 2},
    ]}))
    code = main([
        "--mode", "importance", "--hierarchy", str(configs / "minimal_hierarchy.json"),
        "--forecasts", str(fc), "--n-draws", "1000", "--out", str(tmp_path / "o"),
    ])
    assert code == 1
    err = capsys.readouterr().err
    assert "step=0 error=AllWeightsZero" in err
    diag = read_csv(tmp_path / "o" / "diagnostics.csv")
    assert diag[0]["status"] == "error:AllWeightsZero" and diag[1]["status"] == "ok"


@pytest.mark.parametrize(
    "extra",
    [
        ["--mode", "importance", "--n-draws", "10"],
        ["--mode", "bogus"],
        ["--mode", "enumerate", "--forecasts", "/nonexistent.json"],
        ["--mode", "enumerate", "--alpha", "1.5"],
    ],
)
def test_config_errors_exit_2(tmp_path, configs, extra):
    args = ["--hierarchy", str(configs / "minimal_hierarchy.json"), "--out", str(tmp_path)]
    if "--forecasts" not in extra:
        args += ["--forecasts", str(configs / "poisson_minimal.json")]
    assert main(args + extra) == 2


def test_obs_row_mismatch(tmp_path, configs):
    obs = tmp_path / "obs.csv"
    obs.write_text("U,B1,B2\n1,0,1\n2,1,1\n")
    code = main([
        "--mode", "enumerate", "--hierarchy", str(configs / "minimal_hierarchy.json"),
        "--forecasts", str(configs / "poisson_minimal.json"), "--obs", str(obs), "--out", str(tmp_path / "o"),
    ])
    assert code == 2


@pytest.fixture
def small_study(tmp_path, configs):
    sim = json.loads((configs / "study.json").read_text())
    sim["T"] = 40
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(sim))
    return path


def test_simulate_study_small_is_deterministic(tmp_path, small_study):
    outs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        code = main([
            "--mode", "simulate-study", "--forecasts", str(small_study), "--n-draws", "2000",
            "--seed", "5", "--workers", workers, "--out", str(out),
        ])
        assert code == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == ["diagnostics.csv", "panel.csv", "reconciled.csv", "scores.csv", "summary.json"]
    for other in outs[1:]:
        match, mismatch, errors = filecmp.cmpfiles(outs[0], other, files, shallow=False)
        assert mismatch == [] and errors == []
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert set(summary["effect_fraction"]) == {"strengthening", "compromise", "other"}
    panel = read_csv(outs[0] / "panel.csv")
    assert len(panel) == 40 * 5
    scores = read_csv(outs[0] / "scores.csv")
    assert sum(r["metric"] == "ES" for r in scores) == 40


def test_console_script_entry(tmp_path, configs):
    proc = subprocess.run(
        [sys.executable, "-m", "probrec.cli", "--mode", "enumerate",
         "--hierarchy", str(configs / "minimal_hierarchy.json"),
         "--forecasts", str(configs / "poisson_minimal.json"), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    rows = reconc_rows(tmp_path / "reconciled.csv")
    np.testing.assert_allclose(
        [float(rows[0, s]["mean"]) for s in ("U", "B1", "B2")], [2.5286, 0.9726, 1.5561], atol=1e-4
    )
