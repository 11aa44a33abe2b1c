import csv
import json
import subprocess
import sys

import pytest

from qlwave.cli import DEFAULTS, SCHEMA_VERSION, ConfigError, ExperimentConfig, main


def run(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return main(argv)


def load(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def test_blowup_c_variant(tmp_path):
    assert run(tmp_path, "blowup", "--scenario", "c_variant") == 0
    doc = load(tmp_path, "blowup.json")
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["config"]["scenario"] == "c_variant"
    assert doc["config"]["params"]["lambda"] == 0.05
    rep = doc["result"]["report"]
    assert {"t_eps", "nu_eps", "audits"} <= set(rep)
    assert all(rep["audits"].values())
    assert doc["result"]["sandwich"]["phi_y_ratio_positive_bounded"]


def test_rate_outputs(tmp_path):
    cfg = {"scenario": "model", "grid": {"window_seeds": 3001}}
    assert run(tmp_path, "rate", config=cfg) == 0
    raw = (tmp_path / "rate.csv").read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["k", "t", "tau", "I"]
    assert len(rows) >= 7
    doc = load(tmp_path, "rate.json")
    assert doc["result"]["fit"]["exponent"] > 1.0
    assert doc["result"]["reference_exponent"] == pytest.approx(2.1)


def test_invalid_beta_exit_2(tmp_path, capsys):
    assert run(tmp_path, "blowup", "--beta", "0.4") == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2 and err["kind"] == "validation"
    assert "beta > 1/2" in err["message"]


@pytest.mark.parametrize("cfg", [{"nope": 1}, {"params": {"gamma": 1}}, {"source": {"id": "bogus"}},
                                 {"grid": {"window_seeds": 3}}, {"threads": 0}, {"params": 3}])
def test_config_validation(tmp_path, cfg):
    assert run(tmp_path, "blowup", config=cfg) == 2


def test_unreadable_config(tmp_path):
    assert main(["blowup", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert main(["blowup", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    # a coarse window mesh caps the series below the six points a fit needs
    cfg = {"scenario": "model", "grid": {"window_seeds": 1001}}
    assert run(tmp_path, "rate", config=cfg) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["kind"] == "runtime" and err["type"] == "FitWindowError"


def test_flags_override_config(tmp_path):
    cfg = ExperimentConfig.load(None, {"params": {"eps": 1e-3}, "grid": {"dt": 2e-4}})
    assert cfg.params.eps == 1e-3 and cfg.spec.dt == 2e-4
    assert DEFAULTS["params"]["eps"] == 0.01
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, {"grid": {"bogus": 1}})


def test_simulate_and_norm(tmp_path):
    cfg = {"simulate": {"t_end": 0.05, "n_out": 3}, "grid": {"seeds_x1": 8, "seeds_x2": 2, "window_seeds": 801}}
    assert run(tmp_path, "simulate", "--scenario", "perturbed_data", config=cfg) == 0
    rows = list(csv.reader((tmp_path / "simulate.csv").read_text().splitlines()))
    assert rows[0] == ["t", "x1", "x2", "phi", "v", "phi_x", "w", "phi_xx", "W"]
    assert len(rows) == 1 + 3 * 8 * 2
    assert load(tmp_path, "simulate.json")["result"]["n_seeds"] == 16
    assert run(tmp_path, "norm", "--scenario", "model", config=cfg) == 0
    doc = load(tmp_path, "norm.json")["result"]
    assert doc["I"] > 0 and doc["embedding"]["bounded"]


def test_audit_model(tmp_path):
    assert run(tmp_path, "audit", "--scenario", "model", config={"grid": {"window_seeds": 2001}}) == 0
    doc = load(tmp_path, "audit.json")["result"]
    assert doc["k"] == [7, 8, 9, 10]
    assert doc["decomposition"]["ratio_decreasing"]


def test_sweep_deterministic(tmp_path):
    cfg = {"sweep": {"eps_list": [1e-2, 1e-3], "scenarios": ["model", "c_variant"]}}
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a, "sweep", config=cfg) == 0
    assert run(b, "sweep", "--threads", "2", config=cfg) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    # the JSON embeds the thread count, so only the results are compared
    ra, rb = load(a, "sweep.json")["result"], load(b, "sweep.json")["result"]
    assert ra == rb


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qlwave.cli", "blowup", "--beta", "0.4",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "beta" in json.loads(proc.stderr)["message"]


def test_bad_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["explode"])
    assert exc.value.code == 2
