import json
import subprocess
import sys

import pytest

from chebjacobi.cli import main
from chebjacobi.harness import read_records


def test_bounds_prints_exact_kappa_max(capsys):
    assert main(["bounds", "--stencil", "17", "--n", "64"]) == 0
    out = capsys.readouterr().out.split()
    assert float(out[out.index("kappa_max") + 1]) == 128 / 75
    assert main(["bounds", "--stencil", "9", "--n", "64"]) == 0
    out = capsys.readouterr().out.split()
    assert float(out[out.index("kappa_max") + 1]) == 8 / 5


def test_schedule_prints_weights(capsys):
    assert main(["schedule", "--stencil", "5", "--n", "16", "--tol", "1e-3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    M = int(lines[0].split()[1])
    assert len(lines) == M + 1
    w = [float(l.split()[1]) for l in lines[1:]]
    assert w == sorted(w)


def test_solve_json(tmp_path, capsys):
    out = tmp_path / "r.json"
    trace = tmp_path / "t.csv"
    rc = main(["solve", "--stencil", "17", "--n", "32", "--method", "cjm",
               "--real-error", "1e-6", "--backend", "parallel", "--workers", "2",
               "--out", str(out), "--trace", str(trace)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["report"]["final_real_error"] <= 1e-6
    assert doc["config"]["workers"] == 2
    assert trace.read_text().startswith("#cycle")


def test_solve_nonconvergence_exit_code(tmp_path):
    rc = main(["solve", "--stencil", "5", "--n", "16", "--method", "jacobi", "--tol", "1e-12",
               "--max-cycles", "2", "--out", str(tmp_path / "r.json")])
    assert rc == 2
    assert json.loads((tmp_path / "r.json").read_text())["report"]["status"] == "not_converged"


@pytest.mark.parametrize(
    "argv",
    [
        ["bounds", "--stencil", "7", "--n", "16"],
        ["bounds", "--stencil", "5", "--n", "4"],
        ["schedule", "--stencil", "5", "--n", "16", "--tol", "2"],
        ["solve", "--stencil", "5", "--n", "16", "--tol", "1e-6", "--real-error", "1e-6"],
        ["bench", "--stencils", "5,11", "--n-list", "16", "--out", "x.csv"],
        ["bench", "--n-list", "32,16", "--out", "x.csv"],
        ["frobnicate"],
    ],
)
def test_invalid_configuration_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as ei:
        rc = main(argv)
        raise SystemExit(rc)
    assert ei.value.code == 3


def test_io_error_exit_code(tmp_path):
    assert main(["ratios", "--in", str(tmp_path / "missing.csv"), "--n", "16"]) == 4
    rc = main(["solve", "--stencil", "5", "--n", "8", "--out", str(tmp_path / "no" / "dir.json")])
    assert rc == 4


def test_bench_and_ratios(tmp_path, capsys):
    out = tmp_path / "b.csv"
    rc = main(["bench", "--stencils", "5,17", "--methods", "jacobi,cjm", "--n-list", "16",
               "--backends", "serial,parallel", "--workers", "2", "--out", str(out)])
    assert rc == 0
    recs = read_records(out)
    assert len(recs) == 8
    capsys.readouterr()
    assert main(["ratios", "--in", str(out), "--n", "16"]) == 0
    text = capsys.readouterr().out
    assert "17pt" in text and "cj_parallel" in text
    assert main(["ratios", "--in", str(out), "--n", "32"]) == 3


def test_sweep_order(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["sweep-order", "--stencil", "9", "--n-list", "16,32,64", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "#stencil,n,h,real_error,iterations"
    assert len(lines) == 5 and lines[-1].startswith("# slope")
    assert "slope" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "chebjacobi", "bounds", "--stencil", "5", "--n", "8"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "kappa_min" in r.stdout
