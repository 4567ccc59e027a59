import csv
import subprocess
import sys

import pytest

from exptrawl import io
from exptrawl.cli import main
from exptrawl.likelihood import log_likelihood
from exptrawl.model import JumpPath, poisson, skellam


@pytest.fixture
def workdir(tmp_path):
    io.write_model_config(tmp_path / "m.cfg", skellam(1.3, 1.1, 3.4))
    assert main(["simulate", "--model", str(tmp_path / "m.cfg"), "--seed", "3", "--horizon", "5",
                 "--out", str(tmp_path / "p.csv")]) == 0
    return tmp_path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def args_for(d, *extra):
    return ["--model", str(d / "m.cfg"), "--path", str(d / "p.csv"), *extra]


def test_simulate_writes_path_and_hidden(workdir):
    assert (workdir / "p.csv.cfg").exists()
    assert rows(workdir / "p.hidden.csv")[0] == ["time", "mark", "kind"]
    assert rows(workdir / "p.csv")[0] == ["time", "size"]


def test_filter_columns(workdir):
    out = workdir / "f.csv"
    assert main(["filter", *args_for(workdir, "--out", str(out))]) == 0
    table = rows(out)
    assert table[0] == ["time", "E_C_plus", "E_C_minus", "E_D", "lambda_-1", "lambda_1"]
    n = len(io.read_path(workdir / "p.csv"))
    assert len(table) == n + 3  # t = 0, every jump left limit, t = T
    assert main(["filter", *args_for(workdir, "--delta", "0.5", "--out", str(out))]) == 0
    assert len(rows(out)) > n + 2


def test_smooth_outputs(workdir):
    out = workdir / "s.csv"
    assert main(["smooth", *args_for(workdir, "--out", str(out))]) == 0
    assert rows(out)[0] == ["time", "E_C_plus", "E_C_minus", "E_D"]
    assert rows(workdir / "s.weights.csv")[0] == ["time", "size", "arrival_prob", "departure_prob"]


def test_loglik_matches_library(workdir, capsys):
    assert main(["loglik", *args_for(workdir, "--delta", "0.1")]) == 0
    values = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    path = io.read_path(workdir / "p.csv")
    assert float(values["loglik"]) == log_likelihood(skellam(1.3, 1.1, 3.4), path, 0.1)
    assert set(values) == {"loglik", "jump_term", "integral_term", "initial_term", "delta"}
    assert main(["loglik", *args_for(workdir, "--exact", "--no-initial")]) == 0
    values = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert values["delta"] == "exact" and float(values["initial_term"]) == 0.0


def test_fit_em_and_mle(workdir):
    fitted, trace = workdir / "em.cfg", workdir / "em.trace.csv"
    assert main(["fit-em", *args_for(workdir, "--moment-start", "--monitor-delta", "0",
                                     "--out", str(fitted), "--trace-out", str(trace))]) == 0
    assert io.read_model_config(fitted).model.support == (-1, 1)
    assert rows(trace)[0] == ["iteration", "nu.-1", "nu.1", "phi", "loglik", "max_change"]
    fitted = workdir / "mle.cfg"
    assert main(["fit-mle", *args_for(workdir, "--out", str(fitted), "--trace-out",
                                      str(workdir / "mle.trace.csv"))]) == 0
    assert io.read_model_config(fitted).get("delta") == 0.5


def test_fit_em_not_converged_exit_code(workdir):
    assert main(["fit-em", *args_for(workdir, "--max-iter", "1", "--out", str(workdir / "x.cfg"))]) == 3


def test_mple_and_bounds(tmp_path, capsys):
    path = JumpPath(4, 30.0, [1.0, 3.0, 6.0, 9.0, 14.0], [1, -2, 1, -1, 2])
    io.write_path(tmp_path / "p.csv", path)
    assert main(["mple", "--path", str(tmp_path / "p.csv"), "--no-phi"]) == 0
    assert "nu.1 = " in capsys.readouterr().out
    assert main(["mple", "--path", str(tmp_path / "p.csv"), "--geometric", "--trace-out",
                 str(tmp_path / "t.csv")]) == 0
    cfg = io.parse_model_config(capsys.readouterr().out)
    assert cfg.model.phi > 0
    assert main(["bounds", "--path", str(tmp_path / "p.csv")]) == 0
    table = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert table[0] == ["mark", "lower", "upper"]
    # size 1: the arrival at t=1 covers the departure at t=9; size 2: one net departure
    assert table[1:] == [["1", "0", "2"], ["2", "1", "2"], ["3", "0", "0"], ["4", "0", "0"]]
    assert main(["bounds", "--path", str(tmp_path / "p.csv"), "--marks", "1", "2", "--over-time"]) == 0
    assert capsys.readouterr().out.startswith("time,mark,lower,upper\n")


def test_oracle_subcommand(tmp_path, capsys):
    io.write_model_config(tmp_path / "m.cfg", poisson(0.8, 0.4))
    io.write_path(tmp_path / "p.csv", JumpPath(1, 2.0, [0.5, 1.0], [1, -1]))
    base = ["--model", str(tmp_path / "m.cfg"), "--path", str(tmp_path / "p.csv")]
    assert main(["oracle", *base]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "time,C_1,prob"
    assert main(["oracle", *base, "--kind", "ctmc", "--dt", "1e-3"]) == 0


@pytest.mark.parametrize(
    "argv",
    [[], ["filter"], ["simulate", "--horizon", "1"], ["nonsense"], ["loglik", "--delta", "abc"]],
)
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage error" in capsys.readouterr().err


def test_model_errors_exit_2(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("phi = 1\nnu.1 = -3\n")
    io.write_path(tmp_path / "p.csv", JumpPath(0, 2.0, [1.0], [-1]))
    assert main(["loglik", "--model", str(tmp_path / "bad.cfg"), "--path", str(tmp_path / "p.csv")]) == 2
    assert "line 2" in capsys.readouterr().err
    io.write_model_config(tmp_path / "m.cfg", poisson(1.0, 1.0))
    # a departure from an empty Poisson system has zero intensity
    assert main(["loglik", "--model", str(tmp_path / "m.cfg"), "--path", str(tmp_path / "p.csv")]) == 2
    assert "ZeroIntensityJump" in capsys.readouterr().err
    assert main(["mple", "--path", str(tmp_path / "p.csv")]) == 2
    assert main(["loglik", "--model", str(tmp_path / "missing.cfg"), "--path", str(tmp_path / "p.csv")]) == 2


def test_global_flags_before_subcommand(workdir, capsys):
    assert main(["--model", str(workdir / "m.cfg"), "--path", str(workdir / "p.csv"), "loglik"]) == 0
    assert capsys.readouterr().out.startswith("loglik = ")


def test_module_entry_point(workdir):
    res = subprocess.run(
        [sys.executable, "-m", "exptrawl.cli", "loglik", *args_for(workdir)],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0 and res.stdout.startswith("loglik = ")
