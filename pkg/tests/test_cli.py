import csv
from pathlib import Path

import pytest

from dht.cli import main
from dht.problem import ProblemError, parse_problem

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"

LQ_SHORT = """
name = lqs
n = 1
m = 1
h = 0.1
beta = 0.95
[params]
a = 1
b = 1
[model]
F = -(a*q1[0]^2 + b*u1[0]^2)/2
f1 = u1[0]
[generator gauge]
B = 1
[solve]
degree = 1
[simulate]
q0 = 1
p0 = -1
N = 50
"""


def write(tmp_path, text, name="prob.dht"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_derive_lq(capsys):
    assert main(["derive", str(PROBLEMS / "lq.dht")]) == 0
    out = capsys.readouterr().out
    assert "(p1[+1]-p1[0])/h = a*q1[0] + (1-beta)*p1[+1]/h" in out
    assert "Gamma1 = (1-beta)*p1[+1]/h" in out
    assert "u1[0] = beta*p1[+1]/b" in out


def test_derive_log_ak_control(capsys):
    assert main(["derive", str(PROBLEMS / "log_ak.dht")]) == 0
    assert "u1[0] = 1/(beta*p1[+1])" in capsys.readouterr().out


def test_beta_one_current_rejected(tmp_path, capsys):
    text = LQ_SHORT.replace("beta = 0.95", "beta = 1")
    assert main(["derive", write(tmp_path, text)]) == 2
    assert "does not exist for beta = 1" in capsys.readouterr().err


def test_beta_one_present_simulates(tmp_path, capsys):
    assert main(["simulate", str(PROBLEMS / "lq_beta1.dht"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "lq_beta1.csv").exists()


def test_check_reports_pass_and_fail(capsys):
    assert main(["check", str(PROBLEMS / "lq.dht")]) == 0
    out = capsys.readouterr().out
    assert "[gauge]" in out and "verdict: pass" in out
    assert "[wrong]" in out and "verdict: FAIL" in out
    assert "not conserved" in out


def test_solve_round_trip(tmp_path, capsys):
    src = write(tmp_path, LQ_SHORT)
    assert main(["solve", src]) == 0
    out = capsys.readouterr().out
    sections = out[out.index("[generator"):]
    combined = write(tmp_path, LQ_SHORT.replace("[generator gauge]\nB = 1\n", "") + sections, "rt.dht")
    assert main(["check", combined]) == 0
    checked = capsys.readouterr().out
    assert checked.count("verdict: pass") == sections.count("[generator")
    assert "FAIL" not in checked


def test_simulate_csv(tmp_path, capsys):
    src = write(tmp_path, LQ_SHORT)
    assert main(["simulate", src, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    rows = list(csv.reader((tmp_path / "lqs.csv").open()))
    assert rows[0][:4] == ["k", "t", "q1", "p1"]
    assert len(rows) == 52
    assert "drift" in out and "[pass]" in out


def test_seed_reproducible(tmp_path, capsys):
    src = write(tmp_path, LQ_SHORT)
    main(["solve", src, "--seed", "7"])
    a = capsys.readouterr().out
    main(["solve", src, "--seed", "7"])
    assert a == capsys.readouterr().out


@pytest.mark.parametrize("edit, message", [
    (("f1 = u1[0]\n", ""), "dynamics required: missing f1"),
    (("N = 50", "N = 0"), "N ≥ 1 required"),
    (("b = 1", "b = x"), "b must be a number"),
    (("[solve]", "[solver]"), "unknown section"),
    (("F = ", "F = )"), "malformed expression"),
])
def test_invalid_input_exit_2(tmp_path, capsys, edit, message):
    text = LQ_SHORT.replace(*edit)
    assert main(["derive", write(tmp_path, text)]) == 2
    assert message in capsys.readouterr().err


def test_error_carries_line_number():
    with pytest.raises(ProblemError) as info:
        parse_problem("n = 1\nh = 0.1\nbeta = 2\n", "x.dht")
    assert str(info.value).startswith("x.dht:3:")


def test_missing_file_exit_2(tmp_path, capsys):
    assert main(["derive", str(tmp_path / "nope.dht")]) == 2


def test_numeric_failure_exit_3(tmp_path, capsys):
    text = LQ_SHORT.replace("N = 50", "N = 50\nmax_iter = 1")
    text = text.replace("F = -(a*q1[0]^2 + b*u1[0]^2)/2\nf1 = u1[0]", "F = ln(u1[0])\nf1 = q1[0] - u1[0]")
    text = text.replace("[params]\na = 1\nb = 1\n", "")
    assert main(["simulate", write(tmp_path, text), "--out", str(tmp_path)]) == 3
    assert "numeric error" in capsys.readouterr().err


def test_bad_flags(tmp_path):
    src = write(tmp_path, LQ_SHORT)
    assert main(["solve", src, "--tol", "0"]) == 2
    assert main(["solve", src, "--seed", "-1"]) == 2
