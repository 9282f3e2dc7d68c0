import numpy as np
import pytest

from stochks import cli
from stochks.analysis import Check
from stochks.io import read_jsonl, read_trajectory_csv

CLOSED_FORM = [
    "sigma.formula=zero",
    "flux.kind=zero",
    "solver.shift_drift=false",
    "initial.coeffs=[1.0]",
    "solver.T=0.5",
    "solver.dt=1e-2",
]


def test_simulate_closed_form(tmp_path):
    assert cli.main(["simulate", "--out", str(tmp_path), "--quiet"] + sum([["--set", s] for s in CLOSED_FORM], [])) == 0
    header, rows = read_trajectory_csv(tmp_path / "trajectory.csv")
    t = rows[:, 0]
    # L = π: λ₁ = 1 and μ₁ = c = 1
    np.testing.assert_allclose(rows[:, 1], np.exp(-t), rtol=1e-13)
    np.testing.assert_allclose(rows[:, 2], np.exp(-t) * np.sqrt(2.0), rtol=1e-13)
    assert np.all(rows[:, 4:] == 0)
    assert (tmp_path / "config.yaml").exists()
    rec = read_jsonl(tmp_path / "report.jsonl")[0]
    assert rec["command"] == "simulate" and rec["seed"] == 0 and rec["config"]["solver"]["dt"] == 1e-2


def test_byte_identical_reruns(tmp_path):
    args = ["simulate", "--out", str(tmp_path), "--seed", "17", "--quiet", "--set", "solver.T=0.2",
            "--set", "output.formats=[csv, jsonl, binary]"]
    assert cli.main(args) == 0
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert cli.main(args) == 0
    second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert first == second and set(first) == {"config.yaml", "report.jsonl", "trajectory.csv", "trajectory.kssp"}


def test_config_file_and_echo(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("solver:\n  dt: 0.01\n  T: 0.1\nensemble:\n  n_paths: 200\n")
    out = tmp_path / "o"
    status, checks = cli.run("ensemble", cfg, (), None, out, None, True)
    assert status == 0 and checks
    echoed = (out / "config.yaml").read_text()
    assert "n_paths: 200" in echoed and "dt: 0.01" in echoed


def test_certify(tmp_path):
    status, checks = cli.run("certify", out=tmp_path, quiet=True)
    assert status == 0 and {c.name for c in checks} >= {"flux-lipschitz", "kernel-sup"}


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--set", "solver.dt=-1"],
        ["simulate", "--set", "noise.gamma=0.4"],
        ["simulate", "--config", "/nonexistent/exp.yaml"],
        ["simulate", "--set", "broken"],
    ],
)
def test_operational_errors_exit_two(tmp_path, argv, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as err:
        cli.main(["frobnicate"])
    assert err.value.code == 2


def test_numerical_breakdown_exit_one(tmp_path):
    argv = ["simulate", "--out", str(tmp_path), "--set", "sigma.C=1e200", "--set", "solver.N_trunc=.inf",
            "--set", "solver.T=0.1", "--quiet"]
    assert cli.main(argv) == 1


def test_failed_check_exit_one(tmp_path, monkeypatch, capsys):
    monkeypatch.setitem(cli.COMMANDS, "certify", lambda ctx: [Check("always-fails", 0.0, 1.0, 0.0, False)])
    assert cli.main(["certify", "--out", str(tmp_path)]) == 1
    assert "FAIL  always-fails" in capsys.readouterr().out
    assert read_jsonl(tmp_path / "report.jsonl")[0]["pass"] is False
