import json
import time

import numpy as np
import pytest

from o2clusters import cli
from o2clusters.bonds import FeasibilityError
from o2clusters.cli import ConfigError, ExperimentConfig, load_config, main


def test_config_round_trip():
    cfg = ExperimentConfig(model="xy", side=6, temperatures=(0.5, 1.25), seed=11, proposal_width=0.3)
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again == cfg
    assert again.to_text() == cfg.to_text()


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nmodel = villain\nside = 5  # inline\ntemperatures = 0.5, 1.0\n")
    cfg = load_config(path, ["seed=3", "bc=free"])
    assert (cfg.side, cfg.seed, cfg.bc, cfg.temperatures) == (5, 3, "free", (0.5, 1.0))


@pytest.mark.parametrize("override", ["nonsense=1", "temperatures=", "side=x", "model=ising",
                                      "temperatures=-1", "batches=4", "site=1000"])
def test_bad_config_rejected(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])
    assert main(["simulate", override]) == cli.EXIT_CONFIG


def test_missing_file_and_no_command(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "absent.cfg")]) == cli.EXIT_CONFIG
    assert main([]) == cli.EXIT_CONFIG
    assert main(["--dump-config"]) == cli.EXIT_OK
    assert "model = villain" in capsys.readouterr().out


def test_verify_exit_codes(capsys):
    assert main(["verify", "all"]) == cli.EXIT_OK
    assert "verify: PASS" in capsys.readouterr().out
    assert main(["verify", "bonds", "--perturb", "0.01"]) == cli.EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nope"])
    assert exc.value.code == 2


def test_simulate_smoke_is_fast_and_reproducible(tmp_path):
    args = ["simulate", "side=4", "n_measurements=1000", "burn_in=100", "seed=5", "temperatures=0.8, 1.5"]
    start = time.perf_counter()
    assert main(args + [f"output_dir={tmp_path / 'a'}"]) == 0
    assert time.perf_counter() - start < 10
    assert main(args + [f"output_dir={tmp_path / 'b'}"]) == 0
    for name in ("series_T0.csv", "series_T1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    data = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert set(data["estimates"]) == {"0.8", "1.5"}
    assert data["metadata"]["seed"] == 5
    lines = (tmp_path / "a" / "series_T0.csv").read_text().splitlines()
    assert lines[0] == "sweep_index,observable,value"
    assert len(lines) == 1 + 6 * 1000


def test_worker_count_does_not_change_output(tmp_path):
    args = ["simulate", "side=4", "n_measurements=200", "burn_in=20", "n_chains=3", "seed=9"]
    assert main(args + ["workers=1", f"output_dir={tmp_path / 'w1'}"]) == 0
    assert main(args + ["workers=3", f"output_dir={tmp_path / 'w3'}"]) == 0
    assert (tmp_path / "w1" / "series_T0.csv").read_bytes() == (tmp_path / "w3" / "series_T0.csv").read_bytes()


def test_environment_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUTPUT, str(tmp_path / "env"))
    assert main(["simulate", "side=3", "n_measurements=64", "burn_in=0", "model=xy"]) == 0
    assert (tmp_path / "env" / "summary.json").exists()
    assert (tmp_path / "env" / "config.txt").read_text().startswith("model = xy")


def test_dilute_simulate(tmp_path):
    assert main(["simulate", "model=dilute_potts", "side=3", "bc=torus", "n_measurements=500",
                 "burn_in=50", "Q=3", f"output_dir={tmp_path}"]) == 0
    est = json.loads((tmp_path / "summary.json").read_text())["estimates"]["1.0"]
    assert {"tau", "rhs", "diff", "diff_err"} <= set(est)


def test_rho_model_runs(tmp_path):
    for rho in ("exp", "quadratic"):
        assert main(["simulate", "model=rho", f"rho={rho}", "side=3", "n_measurements=64",
                     "burn_in=0", f"output_dir={tmp_path / rho}"]) == 0


def test_sweep_cos1_decreases_with_t(tmp_path):
    assert main(["sweep", "side=8", "temperatures=0.4, 1.0, 2.5", "n_measurements=2000",
                 "burn_in=200", f"output_dir={tmp_path}"]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].split(",") == list(cli.SWEEP_COLUMNS)
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    cos1, err = rows[:, 1], rows[:, 2]
    assert np.all(np.diff(cos1) < -3 * (err[1:] + err[:-1]))
    with pytest.raises(ConfigError):
        cli.sweep_rows(ExperimentConfig(model="dilute_potts"))


def test_oracle_command(tmp_path):
    path = tmp_path / "m.json"
    assert main(["oracle", "--output", str(path)]) == 0
    saved = json.loads(path.read_text())
    shipped = json.loads(open("tests/data/oracle_manifest.json").read())
    assert saved == shipped


def test_feasibility_exit_code(monkeypatch):
    def boom(cfg, out=None):
        raise FeasibilityError("c above min(p, q)")

    monkeypatch.setattr(cli, "cmd_simulate", boom)
    assert main(["simulate", "side=3"]) == cli.EXIT_FEASIBILITY
