import json
from pathlib import Path

import numpy as np
import pytest

from sisatlas import io
from sisatlas.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from sisatlas.config import RunConfig
from sisatlas.errors import ConfigError

CONSTANT = {
    "domain": {"length": 1.0, "nodes": 101},
    "coefficients": {"kind": "constant", "betaValue": 2.0, "gammaValue": 1.0},
    "model": {"dI": 1.0, "dS": 1.0, "r0": 2.0},
    "solver": {"pointsPerDecade": 20},
}

BACKWARD = {
    "domain": {"length": 1.0, "nodes": 201},
    "coefficients": {"kind": "cosine-perturbation", "k": 1.0, "m": 1, "cM": 1.0, "eps": "auto"},
    "model": {"dI": 0.25, "dS": 1e-6, "r0": 0.9985},
    "solver": {"pointsPerDecade": 50},
    "simulation": {"tMax": 1e6, "dt0": 0.01, "dtMax": 50, "stagnationTol": 1e-12,
                   "initialData": {"kind": "dfe-seed", "amplitude": 1e-8}},
    "output": {"stride": 50},
}

FORWARD = {
    "domain": {"length": 1.0, "nodes": 201},
    "coefficients": {"kind": "cosine-perturbation", "k": 1.0, "m": 1, "cM": 1.0, "eps": "auto"},
    "model": {"dI": 0.15, "dS": 1e-6, "r0": 1.0001},
    "solver": {"pointsPerDecade": 100},
}


def run(tmp_path, command, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"out_{command}"
    code = main([command, "--config", str(path), "--out", str(out)])
    return code, out


def test_eigen_constant(tmp_path):
    code, out = run(tmp_path, "eigen", CONSTANT)
    assert code == EXIT_OK
    data = json.loads((out / "eigen.json").read_text())
    assert data["r1"] == pytest.approx(2.0, abs=1e-10)
    phi = io.read_csv(out / "phi1.csv")
    np.testing.assert_allclose(phi["phi1"], 1.0, atol=1e-10)


def test_classify_constant(tmp_path):
    code, out = run(tmp_path, "classify", CONSTANT)
    assert code == EXIT_OK
    roots = json.loads((out / "roots.json").read_text())
    assert roots["count"] == 1
    assert roots["roots"][0]["l"] == pytest.approx(1.0, abs=1e-10)
    prof = io.read_csv(out / roots["roots"][0]["s_csv"])
    np.testing.assert_allclose(prof["S"], 0.5, atol=1e-9)
    np.testing.assert_allclose(prof["I"], 0.5, atol=1e-9)


def test_manifest_digests_and_determinism(tmp_path):
    code, out = run(tmp_path, "classify", CONSTANT)
    first = json.loads((out / "manifest.json").read_text())
    for name, digest in first["files"].items():
        assert io.sha256(out / name) == digest
    assert "manifest.json" not in first["files"]
    assert first["config"] == CONSTANT
    assert "wallTime" in first
    code, out = run(tmp_path, "classify", CONSTANT)
    second = json.loads((out / "manifest.json").read_text())
    assert first["files"] == second["files"]


def test_manifest_config_round_trip(tmp_path):
    code, out = run(tmp_path, "thresholds", BACKWARD)
    manifest = json.loads((out / "manifest.json").read_text())
    again_dir = tmp_path / "again"
    again_dir.mkdir()
    code2, out2 = run(again_dir, "thresholds", manifest["config"])
    assert code2 == EXIT_OK
    again = json.loads((out2 / "manifest.json").read_text())
    assert again["files"] == manifest["files"]


def test_csv_format(tmp_path):
    code, out = run(tmp_path, "curve", CONSTANT)
    raw = (out / "curve.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "l,N_dI,N_dIdS,slope,int_u,int_lv"
    assert float(lines[1].split(",")[0]) == pytest.approx(0.5)


def test_curve_forward_slope_changes_sign_twice(tmp_path):
    code, out = run(tmp_path, "curve", FORWARD)
    assert code == EXIT_OK
    slope = io.read_csv(out / "curve.csv")["slope"]
    signs = np.sign(slope[np.abs(slope) > 1e-9])
    assert np.count_nonzero(np.diff(signs)) >= 2


def test_thresholds_backward(tmp_path):
    code, out = run(tmp_path, "thresholds", BACKWARD)
    assert code == EXIT_OK
    th = json.loads((out / "thresholds.json").read_text())
    assert th["r0Low"] < 1
    assert th["d2Star"] > 0


def test_profiles_and_simulate_backward(tmp_path):
    code, out = run(tmp_path, "profiles", BACKWARD)
    assert code == EXIT_OK
    rep = json.loads((out / "scaling.json").read_text())
    assert rep["checks"]["passed"]
    assert (out / "s_star_low.csv").exists() and (out / "i_star_high.csv").exists()
    code, out = run(tmp_path, "simulate", BACKWARD)
    assert code == EXIT_OK
    steady = json.loads((out / "steady.json").read_text())
    assert steady["outcome"] == "DFE"
    traj = io.read_csv(out / "trajectory.csv")
    assert list(traj) == ["t", "x", "S", "I"]


def test_appendix(tmp_path):
    code, out = run(tmp_path, "appendix", FORWARD)
    assert code == EXIT_OK
    regime = json.loads((out / "regime.json").read_text())
    assert regime["regime"] == "Forward"
    assert regime["tth1_agrees"] and regime["tth2_agrees"]
    exp = json.loads((out / "expansion.json").read_text())
    assert exp["passed"]


def test_table_coefficients(tmp_path):
    x = np.linspace(0, 1, 11)
    io.write_csv(tmp_path / "coef.csv", ["x", "beta", "gamma"], [x, np.full(11, 2.0), np.ones(11)])
    cfg = dict(CONSTANT, coefficients={"kind": "table", "path": "coef.csv"})
    code, out = run(tmp_path, "eigen", cfg)
    assert code == EXIT_OK
    assert json.loads((out / "eigen.json").read_text())["r1"] == pytest.approx(2.0, abs=1e-10)


def test_table_with_nonpositive_beta_exit_2(tmp_path):
    x = np.linspace(0, 1, 11)
    beta = np.full(11, 2.0)
    beta[4] = 0.0
    io.write_csv(tmp_path / "coef.csv", ["x", "beta", "gamma"], [x, beta, np.ones(11)])
    cfg = dict(CONSTANT, coefficients={"kind": "table", "path": "coef.csv"})
    code, out = run(tmp_path, "eigen", cfg)
    assert code == EXIT_CONFIG
    assert not out.exists()


@pytest.mark.parametrize("mutate", [
    lambda c: c.pop("domain"),
    lambda c: c["coefficients"].update(kind="spline"),
    lambda c: c["model"].update(totalMass=1.0),
    lambda c: c["domain"].update(nodes=2),
    lambda c: c["domain"].update(nodes="many"),
])
def test_config_errors_exit_2(tmp_path, mutate, capsys):
    cfg = json.loads(json.dumps(CONSTANT))
    mutate(cfg)
    code, _ = run(tmp_path, "eigen", cfg)
    assert code == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_domain_error_exit_2(tmp_path):
    cfg = json.loads(json.dumps(CONSTANT))
    cfg["model"]["r0"] = 1.5
    code, _ = run(tmp_path, "profiles", cfg)
    assert code == EXIT_CONFIG


def test_solver_failure_exit_3(tmp_path, capsys, monkeypatch):
    from sisatlas import spectral
    from sisatlas.errors import SolverError

    def fail(*args, **kwargs):
        raise SolverError("inverse iteration did not converge")

    monkeypatch.setattr(spectral, "principal_pair", fail)
    code, out = run(tmp_path, "eigen", CONSTANT)
    assert code == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err
    assert not out.exists()


def test_invalid_json_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["eigen", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_failed_run_keeps_previous_output(tmp_path):
    code, out = run(tmp_path, "eigen", CONSTANT)
    before = (out / "eigen.json").read_bytes()
    cfg = json.loads(json.dumps(CONSTANT))
    cfg["coefficients"]["betaValue"] = -1.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["eigen", "--config", str(path), "--out", str(out)]) == EXIT_CONFIG
    assert (out / "eigen.json").read_bytes() == before


def test_run_config_sections():
    cfg = RunConfig.from_dict(BACKWARD)
    assert cfg.section("simulation")["tMax"] == 1e6
    assert cfg.solver["newtonTol"] == 1e-11
    with pytest.raises(ConfigError):
        RunConfig.from_dict([])


def test_json_sorted_and_finite(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": np.float64(1.0), "a": [np.int64(2), np.inf]})
    text = (tmp_path / "a.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text)["a"] == [2, "inf"]
