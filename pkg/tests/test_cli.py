import json
import subprocess
import sys

import pytest

from aomsim.cli import ConfigError, RunConfig, main, parse_config
from aomsim.io import read_csv

TINY = ["--n-m", "2", "--n-c", "4", "--t-final", "1.0"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("")
    cfg = parse_config(path, env={})
    assert cfg == RunConfig()
    p = cfg.system_params()
    assert (p.gamma_c, p.gamma_m, p.eta, p.v0, p.v1, p.omega_r, p.delta_c, p.delta_a) == (0.5, 2, 5, 20, 40, 1, -1, -2)
    assert (p.omega_m, p.g_ac, p.g_mc) == (1.0, 0.5, 2.0)


def test_flag_beats_file_and_env(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("g_ac = -1\neta = 3\n")
    assert parse_config(path, {"g_ac": "2"}, env={}).g_ac == 2.0
    assert parse_config(path, env={"SIM_ETA": "4.5"}).eta == 4.5
    assert parse_config(path, {"eta": "1"}, env={"SIM_ETA": "4.5"}).eta == 1.0


@pytest.mark.parametrize("text,match", [
    ("n_m = 0\n", "n_m"),
    ("gac = 1\n", "unknown key 'gac'"),
    ("n_traj = 1.5\n", "n_traj: expected an integer"),
    ("eta = 'big'\n", "eta: expected a number"),
    ("[section]\nx = 1\n", "tables"),
    ("g_ac = \n", "c.toml"),
])
def test_config_errors(tmp_path, text, match):
    path = tmp_path / "c.toml"
    path.write_text(text)
    with pytest.raises(ConfigError, match=match):
        parse_config(path, env={})


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/nonexistent/x.toml", env={})


def test_auto_values():
    cfg = parse_config(None, {"epsilon": "auto", "nu": "1.2"}, env={})
    assert cfg.epsilon is None and cfg.nu == 1.2


def test_evolve_writes_csv_with_embedded_config(tmp_path, capsys):
    code, res = run(capsys, "evolve", *TINY, "--output-dir", str(tmp_path))
    assert code == 0 and res["status"] == "ok"
    config, cols = read_csv(tmp_path / "observables.csv")
    assert config["n_c"] == 4 and config["t_final"] == 1.0
    assert len(cols["t"]) == res["samples"]


def test_replay_is_bit_exact(tmp_path, capsys):
    run(capsys, "evolve", *TINY, "--g-ac", "2", "--output-dir", str(tmp_path / "a"))
    run(capsys, "evolve", "--replay", str(tmp_path / "a" / "observables.csv"), "--output-dir", str(tmp_path / "b"))
    a = (tmp_path / "a" / "observables.csv").read_text().splitlines()[1:]
    b = (tmp_path / "b" / "observables.csv").read_text().splitlines()[1:]
    assert a == b


def test_structured_errors(capsys, tmp_path):
    code, res = run(capsys, "evolve", "--n-m", "0")
    assert code == 2 and res["error"] == "ConfigError" and "n_m" in res["message"]
    code, res = run(capsys, "correlations", "--n-m", "2", "--n-c", "3", "--eta", "0", "--g-ac", "0",
                    "--t-ref", "0", "--tau-points", "2", "--output-dir", str(tmp_path))
    assert code == 1 and res["error"] == "VanishingIntensityError"
    with pytest.raises(SystemExit) as exc:
        main(["evolve", "--bogus", "1"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().out.strip())["error"] == "UsageError"


def test_trajectories_and_correlations(tmp_path, capsys):
    code, _ = run(capsys, "trajectories", *TINY, "--n-traj", "4", "--initial", "010", "--output-dir", str(tmp_path))
    assert code == 0
    _, cols = read_csv(tmp_path / "trajectories.csv")
    assert "sem_n_c" in cols and cols["n_c"][0] == 1.0
    code, _ = run(capsys, "correlations", *TINY, "--t-ref", "0.5", "--tau-max", "0.5", "--tau-points", "4",
                  "--output-dir", str(tmp_path))
    assert code == 0
    _, cols = read_csv(tmp_path / "correlations.csv")
    assert cols["re_g1"][0] == pytest.approx(1.0, abs=1e-10)


def test_chaos_test_outputs(tmp_path, capsys):
    code, res = run(capsys, "chaos-test", "--n-m", "2", "--n-c", "4", "--t-final", "220", "--dt", "0.01",
                    "--record-stride", "10", "--n-nu", "2", "--output-dir", str(tmp_path))
    assert code == 0 and res["phase"] in ("Regular", "TimeCrystal", "Chaotic")
    _, summ = read_csv(tmp_path / "chaos_summary.csv", types={"phase": str})
    assert summ["phase"] == [res["phase"]]
    assert (tmp_path / "chaos_k.csv").exists() and (tmp_path / "observables.csv").exists()


def test_phase_diagram_outputs(tmp_path, capsys):
    code, res = run(capsys, "phase-diagram", "--sweep-n-m", "2", "--sweep-n-c", "3", "--t-final", "220",
                    "--dt", "0.01", "--record-stride", "10", "--n-nu", "2", "--g-ac-points", "1",
                    "--g-mc-points", "2", "--g-mc-max", "0.5", "--output-dir", str(tmp_path))
    assert code == 0 and sum(res["counts"].values()) == 2
    meta = json.loads((tmp_path / "phase_diagram.meta.json").read_text())
    assert {"config", "seed", "code_version", "wall_time_s", "config_hash"} <= set(meta)
    assert meta["config"]["base"]["n_c"] == 3


def test_console_script_validate(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "aomsim.cli", "validate", "--output-dir", str(tmp_path)],
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout.strip().splitlines()[-1])["passed"] == 7
    report = json.loads((tmp_path / "validation.json").read_text())
    assert all(r["passed"] for r in report["results"])
