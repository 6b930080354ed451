"""Command-line interface: exit codes, reproducibility, and reports."""

import json

import pytest

from heckelab.cli import main, parse_scalar
from heckelab.spectral import QQ
from fractions import Fraction


def run(*argv):
    try:
        return main(list(argv))
    except SystemExit as exc:  # argparse-level configuration errors
        return exc.code


def test_build_worked_example(tmp_path):
    out = tmp_path / "g.json"
    code = run("build", "--q", "2", "--div", "x:1", "--x", "x", "--n-max", "5",
               "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["meta"]["q"] == 2 and data["meta"]["n_max"] == 5
    manifest = json.loads((tmp_path / "g.json.manifest.json").read_text())
    assert manifest["content_hash"].startswith("sha256:")
    assert manifest["counts"]["vertices"] == 16


def test_build_reproducible_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run("build", "--q", "2", "--div", "t:1", "--x", "t",
                   "--n-max", "5", "--out", str(path)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_build_dot_format(tmp_path, capsys):
    assert run("build", "--q", "2", "--div", "", "--x", "t", "--n-max", "4",
               "--format", "dot") == 0
    out = capsys.readouterr().out
    assert out.startswith("digraph")


def test_config_errors_exit_2():
    assert run("build", "--q", "6", "--div", "t:1", "--x", "t") == 2
    assert run("build", "--q", "2", "--div", "t^2:1", "--x", "t") == 2
    assert run("build", "--q", "2", "--div", "inf:1", "--x", "t") == 2
    assert run("build", "--q", "2", "--div", "t:1", "--x", "t",
               "--builder", "bogus") == 2
    assert run("dims", "--q", "2", "--div", "t:1", "--x", "t") == 2


def test_budget_env_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv("HECKE_LAB_BUDGET", "2")
    assert run("build", "--q", "2", "--div", "t:1", "--x", "t", "--n-max", "4") == 2


def test_dims_worked_example(capsys):
    assert run("dims", "--q", "2", "--div", "x:1", "--x", "x",
               "--lambda", "5") == 0
    out = json.loads(capsys.readouterr().out)
    assert {"lower": out["lower"], "upper": out["upper"], "exact": out["exact"]} == {
        "lower": 1, "upper": 1, "exact": 1
    }


def test_dims_lambda_zero_exit_3():
    assert run("dims", "--q", "2", "--div", "x:1", "--x", "x", "--lambda", "0") == 3


def test_solve_rejects_nucleus_eigenvalue(capsys):
    assert run("solve", "--q", "2", "--div", "t:1", "--x", "t", "--n-max", "7",
               "--lambda", "x^4-2*x^2-4:x") == 3
    err = capsys.readouterr().err
    assert "offending" in err


def test_verify_full_suite(capsys):
    assert run("verify", "--q", "2", "--div", "t:1", "--x", "t",
               "--n-max", "6") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"]
    names = {c["check"] for c in report["checks"]}
    assert names == {
        "degrees", "covering", "splitting", "monodromy", "oracle", "qbinom", "fibers"
    }


def test_verify_corrupted_graph(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert run("build", "--q", "2", "--div", "t:1", "--x", "t", "--n-max", "5",
               "--out", str(out)) == 0
    data = json.loads(out.read_text())
    data["edges"][5]["mult"] += 1
    out.write_text(json.dumps(data, separators=(",", ":"), sort_keys=False))
    code = run("verify", "--q", "2", "--div", "t:1", "--x", "t",
               "--checks", "degrees", "--graph", str(out))
    assert code == 4
    report = json.loads(capsys.readouterr().out)
    assert not report["ok"] and report["checks"][0]["witness"]


def test_verify_unknown_check_exit_2():
    assert run("verify", "--q", "2", "--div", "t:1", "--x", "t",
               "--checks", "nonsense") == 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"q": 2, "div": "t:1", "x": "t", "lambda": "5"}))
    assert run("dims", "--config", str(cfg)) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["exact"] == 1


def test_propagate_closed_form(capsys):
    assert run("propagate", "--q", "2", "--div", "t:1", "--x", "t",
               "--lambda", "3", "--seed-a", "1", "--depth", "4") == 0
    out = json.loads(capsys.readouterr().out)
    values = {(row["gap"], row["layer"]): row["value"] for row in out["values"]}
    assert values[(0, "nucleus")] == "1"
    assert values[(1, "cusp:0")] == "2/3"
    assert values[(2, "cusp:0")] == "4/9"
    assert values[(1, "tower")] == "7/3"  # lambda - (q-1) q / lambda


def test_spectrum_output(capsys):
    assert run("spectrum", "--q", "2", "--div", "t:1", "--x", "t",
               "--n-max", "8") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["charpoly"] == [0, 0, -4, 0, -2, 0, 1]
    assert out["propagative"] == "strictly"
    assert out["gershgorin_ok"]


def test_parse_scalar_forms():
    s = parse_scalar("7/3")
    assert s.field is QQ and s.value == Fraction(7, 3)
    alg = parse_scalar("x^2-2:x")
    assert alg.field.degree == 2
    assert alg.field.mul(alg.value, alg.value) == alg.field.from_int(2)
    with pytest.raises(Exception):
        parse_scalar("x^2-1:x")  # reducible minimal polynomial
