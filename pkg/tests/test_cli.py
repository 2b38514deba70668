from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from blacksol import cli

SMALL = ["--n", "1001"]


def run(args, out):
    return cli.main(list(args) + ["--out", str(out)])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_spectrum_lminus(tmp_path):
    assert run(["spectrum", "--op", "lminus", "-k", "5", *SMALL], tmp_path) == 0
    rows = read_rows(tmp_path / "eigenvalues.csv")
    assert [float(r["exact_if_known"]) for r in rows] == [-2, 0, 4, 10, 18]
    assert max(float(r["abs_error"]) for r in rows) <= 1e-3
    side = json.loads((tmp_path / "eigenvalues.csv.json").read_text())
    assert side["config"]["op"] == "lminus" and "numpy" in side["versions"]


def test_spectrum_stability(tmp_path):
    assert run(["spectrum", "--op", "stability", "-k", "10", "--constrained", *SMALL], tmp_path) == 0
    rows = read_rows(tmp_path / "eigenvalues.csv")
    assert len(rows) == 10 and all(float(r["computed"]) > 0 for r in rows)


@pytest.mark.parametrize("args", [
    ["spectrum", "--op", "lplus", "-k", "0"],
    ["spectrum", "--zero-tol", "-1e-6"],
    ["spectrum", "--n", "4000"],
    ["spectrum", "--op", "nonsense"],
    ["frobnicate"],
    ["invariants", "--c-range", "0.1:0.2"],
])
def test_usage_errors(tmp_path, args):
    assert run(args, tmp_path) == 1


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 1001\nflux = 3\n")
    assert run(["spectrum", "--config", str(cfg)], tmp_path) == 1


def test_negative_tolerance_in_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("zero_tol = -1\n")
    assert run(["verify", "--quick", "--config", str(cfg)], tmp_path) == 1


def test_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 1001\nk = 4\nop = lplus\n")
    args = cli.build_parser().parse_args(["spectrum", "--config", str(cfg), "-k", "3"])
    resolved = cli.resolve(args)
    assert resolved["k"] == 3  # flag beats file
    assert resolved["n"] == 1001 and resolved["op"] == "lplus"  # file beats default
    assert resolved["L"] == 20.0  # default
    assert resolved["explicit"] == ["k", "n", "op"]


def test_solver_error_exit(tmp_path):
    assert run(["pinning", "--potential", "zero", *SMALL], tmp_path) == 2


def test_soliton(tmp_path):
    assert run(["soliton", "--c", "0.1", *SMALL], tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())["report"]
    assert rep["decay_rate"] == pytest.approx(2.0, abs=1e-2)
    prof = np.loadtxt(tmp_path / "profile.csv", delimiter=",", skiprows=1)
    assert prof.shape == (1001, 5)


def test_pinning(tmp_path):
    assert run(["pinning", "--potential", "neg_sech2", "--eps", "0.01"], tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())["report"]
    assert rep["sign_relation_holds"] and rep["pair"] == "imaginary"


def test_invariants(tmp_path):
    assert run(["invariants", "--family", "dark", "--c-range", "0.01:0.1:10"], tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())["report"]
    assert rep["momentum_slope"] == pytest.approx(3.2, rel=0.01)
    assert rep["cm_jacobian_det"] == pytest.approx(64 / 15, rel=0.01)
    assert len(read_rows(tmp_path / "invariants.csv")) == 10


def test_evolve(tmp_path, capsys):
    args = ["evolve", "--scenario", "dark_translation", "--T", "0.5", "--dt", "0.01", "--monitor-every", "10"]
    assert run(args, tmp_path) == 0
    assert "experimental" in capsys.readouterr().err
    rep = json.loads((tmp_path / "report.json").read_text())["report"]
    assert rep["params"]["T"] == 0.5 and rep["params"]["c"] == 0.1
    assert len(read_rows(tmp_path / "monitors.csv")) == 6


def test_full_precision_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["spectrum", "--op", "lplus", "-k", "4", *SMALL], d) == 0
    for name in ("eigenvalues.csv", "eigenvectors.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    val = read_rows(a / "eigenvalues.csv")[1]["computed"]
    assert float(val) == float(format(float(val), ".17g"))
    assert len(val.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 15


def test_verify_quick(tmp_path, capsys):
    assert run(["verify", "--quick"], tmp_path) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 9 and all(ln.startswith("PASS") for ln in lines)
