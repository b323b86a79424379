import csv
import io
import json

import numpy as np
import pytest

from boxopt.cli import CSV_COLUMNS, EXPERIMENTS, cell_seed, main
from boxopt.io import save_manifest

MODEL = """\
parameters
  Matrix A
  Vector b
variables
  Vector x
min
  norm2(A*x - b)
st
  sum(x) == 1
  x >= 0
"""


@pytest.fixture
def simplex_files(tmp_path):
    (tmp_path / "model.txt").write_text(MODEL)
    save_manifest(tmp_path / "data.json", {"A": np.eye(2), "b": np.array([2.0, 0.0])})
    return tmp_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_csv_header_is_pinned():
    assert CSV_COLUMNS == (
        "experiment", "n", "m", "seed", "rep", "time_ms", "outer_iters", "inner_iters_total",
        "f", "violation_inf", "stationarity_inf", "status", "solver_tol", "feas_tol", "extra_params",
    )


def test_solve_simplex(simplex_files, capsys):
    code, out, err = run(capsys, "solve", "--model", str(simplex_files / "model.txt"), "--data", str(simplex_files / "data.json"))
    assert code == 0
    result = json.loads(out)
    assert result["status"] == "Converged"
    assert np.allclose(result["x"]["x"], [1.0, 0.0], atol=1e-6)
    assert result["violation"] <= 1e-6
    for key in ("f", "outer_iterations", "inner_iterations"):
        assert key in result


def test_solve_csv_output(simplex_files, capsys):
    code, out, _ = run(capsys, "solve", "--model", str(simplex_files / "model.txt"), "--data", str(simplex_files / "data.json"), "--format", "csv")
    assert code == 0
    rows = rows_of(out)
    assert [(r["variable"], r["index"]) for r in rows] == [("x", "0"), ("x", "1")]


def test_solve_missing_min(tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("variables\n  Vector x\n  norm2(x)\n")
    code, out, err = run(capsys, "solve", "--model", str(tmp_path / "bad.txt"))
    assert code == 1 and out == ""
    assert "line 3" in err and "bad.txt" in err and len(err.strip().splitlines()) == 1


def test_solve_unbound_parameter(simplex_files, capsys):
    save_manifest(simplex_files / "partial.json", {"A": np.eye(2)})
    code, out, err = run(capsys, "solve", "--model", str(simplex_files / "model.txt"), "--data", str(simplex_files / "partial.json"))
    assert code == 1 and "unbound parameter: b" in err


def test_solve_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--model", str(tmp_path / "nope.txt"))
    assert code == 1 and err


def test_solve_not_converged_exit_code(simplex_files, capsys):
    code, out, _ = run(
        capsys, "solve", "--model", str(simplex_files / "model.txt"), "--data", str(simplex_files / "data.json"), "--max-outer", "1"
    )
    assert code == 2 and json.loads(out)["status"] == "MaxOuter"


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "bench", "--experiment", "nnls-i", "--bogus")
    assert code == 1 and "bogus" in err


def test_unknown_experiment_lists_names(capsys):
    code, _, err = run(capsys, "bench", "--experiment", "nnls-iii")
    assert code == 1
    for name in EXPERIMENTS:
        assert name in err


def test_bad_sizes_rejected(capsys):
    code, _, _ = run(capsys, "bench", "--experiment", "nnls-i", "--sizes", "0.1,-2")
    assert code == 1
    code, _, _ = run(capsys, "bench", "--experiment", "nnls-i", "--reps", "0")
    assert code == 1


def test_bench_nnls_ten_reps(capsys, tmp_path):
    summary = tmp_path / "summary.csv"
    code, out, _ = run(capsys, "bench", "--experiment", "nnls-i", "--sizes", "0.1", "--reps", "10", "--summary", str(summary))
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 10
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert all(r["status"] == "Converged" for r in rows)
    assert [int(r["rep"]) for r in rows] == list(range(10))
    stats = rows_of(summary.read_text())
    assert len(stats) == 1 and int(stats[0]["converged"]) == 10
    for col in ("time_ms_std", "f_std"):
        assert np.isfinite(float(stats[0][col]))


def test_bench_svm_metadata(capsys):
    code, out, _ = run(capsys, "bench", "--experiment", "dual-svm", "--sizes", "200")
    assert code == 0
    row = rows_of(out)[0]
    extra = json.loads(row["extra_params"])
    assert extra["gamma"] == 1.0 and extra["c"] == 1.0
    assert row["n"] == "200" and row["m"] == "1"


def test_bench_is_deterministic(capsys):
    args = ("bench", "--experiment", "fair-logistic", "--sizes", "200", "--seed", "11")
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args)
    a, b = rows_of(first), rows_of(second)
    for row in a + b:
        row.pop("time_ms")
    assert a == b


def test_bench_jobs_keep_row_order(capsys):
    args = ("bench", "--experiment", "joint-gaussian", "--sizes", "5,8", "--reps", "2")
    _, serial, _ = run(capsys, *args)
    _, parallel, _ = run(capsys, *args, "--jobs", "3")
    strip = lambda text: [{k: v for k, v in r.items() if k != "time_ms"} for r in rows_of(text)]  # noqa: E731
    assert strip(serial) == strip(parallel)


def test_bench_json_is_typed(capsys):
    code, out, _ = run(capsys, "bench", "--experiment", "nnls-ii", "--sizes", "0.02", "--format", "json")
    assert code == 0
    row = json.loads(out)[0]
    assert isinstance(row["f"], float) and isinstance(row["n"], int)


def test_cell_seeds_differ():
    seeds = {cell_seed(0, i, r) for i in range(3) for r in range(5)}
    assert len(seeds) == 15
    assert cell_seed(3, 1, 2) == cell_seed(3, 1, 2)


@pytest.mark.parametrize("target", ["two-loop", "working-set"])
def test_check_passes(capsys, target):
    code, out, _ = run(capsys, "check", target)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_check_failure_exit_code(capsys, monkeypatch):
    from boxopt import checks

    monkeypatch.setitem(checks.SUITES, "two-loop", lambda seed=0: [checks.CaseResult("two-loop/0", False, 1.0, 1e-9)])
    code, out, err = run(capsys, "check", "two-loop")
    assert code == 4
    assert "FAIL two-loop/0" in out + err
