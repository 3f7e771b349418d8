"""End-to-end tests for the relaxa command line."""
import csv

import pytest

from relaxa.cli import EXIT_ERROR, EXIT_OK, EXIT_VIOLATED, main
from relaxa.parser.config_parser import parse_config_file
from relaxa.serializer.snapshot import cloud_from_snapshot, mesh_from_snapshot, read_snapshot, snapshot_kind

SMALL = """\
domain = interval(0, 1)
n = 8
T = {T}
dt = 0.05
stride = 1
init = {init}
seed = 7
"""


def _config(tmp_path, name="run.cfg", T=0.2, init="bump(0.5)", extra=""):
    path = tmp_path / name
    path.write_text(SMALL.format(T=T, init=init) + extra, encoding="utf-8")
    return str(path)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_eigen(tmp_path, capsys):
    assert main(["eigen", "--config", _config(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "lambda = " in out
    assert "nodes = 9" in out
    assert "omega7 = fitted" in out


def test_missing_domain_is_an_error(tmp_path, capsys):
    path = tmp_path / "empty.cfg"
    path.write_text("n = 8\n", encoding="utf-8")
    assert main(["eigen", "--config", str(path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_bad_config_line_is_reported(tmp_path, capsys):
    cfg = _config(tmp_path, extra="bogus = 1\n")
    assert main(["solve", "--config", cfg]) == EXIT_ERROR
    assert "line 8" in capsys.readouterr().err


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--config", _config(tmp_path), "--out", str(out)]) == EXIT_OK
    for name in ("ledger.csv", "steps.csv", "trajectory.rlxa", "config.used"):
        assert (out / name).is_file()
    ledger = _rows(out / "ledger.csv")
    assert ledger[0][:3] == ["t", "phi_sq", "energy"]
    assert "E_eps" in ledger[0]
    assert {"E_lower_gap", "E_upper_gap"} <= set(ledger[0])
    assert len(ledger) == 1 + 5
    assert len(_rows(out / "steps.csv")) == 1 + 4
    snap = read_snapshot(out / "trajectory.rlxa")
    assert snap.n_samples == 5
    assert snap.n_nodes == 9
    used = parse_config_file(out / "config.used")
    assert used.out == str(out)
    assert used.seed == 7
    assert capsys.readouterr().out.startswith("OK  solve hyperbolic")


def test_zero_horizon_gives_one_sample(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--config", _config(tmp_path, T=0.0), "--out", str(out)]) == EXIT_OK
    assert len(_rows(out / "ledger.csv")) == 2
    assert len(_rows(out / "steps.csv")) == 1


def test_parabolic_solve(tmp_path, capsys):
    out = tmp_path / "par"
    cfg = _config(tmp_path, extra="problem = parabolic\n")
    assert main(["solve", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "E_eps" not in _rows(out / "ledger.csv")[0]
    assert "solve parabolic eps=0" in capsys.readouterr().out


def test_solve_is_deterministic(tmp_path):
    cfg = _config(tmp_path, init="random(1.0)")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["solve", "--config", cfg, "--out", str(b)]) == EXIT_OK
    assert (a / "trajectory.rlxa").read_bytes() == (b / "trajectory.rlxa").read_bytes()
    assert (a / "ledger.csv").read_bytes() == (b / "ledger.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["solve", "--config", cfg, "--out", str(c), "--seed", "8"]) == EXIT_OK
    assert (a / "trajectory.rlxa").read_bytes() != (c / "trajectory.rlxa").read_bytes()


def test_verify_zero_run(tmp_path, capsys):
    run = tmp_path / "zero"
    assert main(["solve", "--config", _config(tmp_path, init="zero"), "--out", str(run)]) == EXIT_OK
    report = tmp_path / "report"
    assert main(["verify", str(run), "--out", str(report)]) == EXIT_OK
    text = (report / "report.txt").read_text(encoding="utf-8")
    assert "count.violated = 0" in text
    assert _rows(report / "report.csv")[0] == ["estimate", "status", "detail", "source"]
    assert "0 violated" in capsys.readouterr().out


def test_verify_violated_ledger(tmp_path, capsys):
    ledger = tmp_path / "broken_ledger.csv"
    ledger.write_text("t,phi_sq,energy,dissipation\n0,1,1,0\n0.1,0.9,0.9,0\n0.2,0.8,0.8,0\n",
                      encoding="utf-8")
    assert main(["verify", str(ledger)]) == EXIT_VIOLATED
    assert "FAIL energy-identity" in capsys.readouterr().out


def test_verify_missing_path(tmp_path, capsys):
    assert main(["verify", str(tmp_path / "nowhere.csv")]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_jobs_must_be_positive(tmp_path, capsys):
    assert main(["limit", "--config", _config(tmp_path), "--jobs", "0"]) == EXIT_ERROR
    assert "--jobs" in capsys.readouterr().err


def test_subcommand_is_required():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


@pytest.mark.parametrize("command", ["solve", "eigen", "split"])
def test_jobs_belongs_to_limit_only(tmp_path, command):
    with pytest.raises(SystemExit) as exc:
        main([command, "--config", _config(tmp_path), "--jobs", "2"])
    assert exc.value.code == 2


def test_limit_writes_tables_and_clouds(tmp_path, capsys):
    out = tmp_path / "limit"
    cfg = _config(tmp_path, extra="eps_grid = [0.5]\nn_seeds = 1\nt_transient = 0.1\nt_sample = 0.1\n")
    assert main(["limit", "--config", cfg, "--out", str(out)]) == EXIT_OK
    for name in ("absorbing.csv", "sweep.csv", "mesh.rlxa", "operators.rlxa"):
        assert (out / name).is_file()
    assert len(_rows(out / "sweep.csv")) == 2
    assert snapshot_kind(read_snapshot(out / "operators.rlxa")) == "operators"
    assert mesh_from_snapshot(read_snapshot(out / "mesh.rlxa")).n_nodes == 9
    clouds = {e: cloud_from_snapshot(read_snapshot(out / f"cloud_eps{e}.rlxa")) for e in ("0", "0.5")}
    assert clouds["0"].eps == 0.0
    assert clouds["0.5"].eps == 0.5
    assert len(clouds["0.5"]) == len(clouds["0"]) >= 1
    assert "limit:" in capsys.readouterr().out
