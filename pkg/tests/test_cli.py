import csv
import json

import numpy as np
import pytest

from qdopt.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, render_csv
from qdopt.experiments import resolve_config
from qdopt.measurement import DiscretePOVM, povm_to_json


def run(tmp_path, *argv):
    code = main([*argv, "--out", str(tmp_path)])
    cmd = argv[0] if argv[0] != "run" else json.loads(open(argv[1]).read())["command"]
    report = json.loads((tmp_path / f"{cmd}.json").read_text())
    return code, report


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_verify_ml_small_grid(tmp_path):
    code, report = run(tmp_path, "verify-ml", "--L", "1,3", "--dim", "30", "--beta-extent", "1", "--beta-step", "0.5")
    assert code == EXIT_OK and report["passed"]
    rows = read_csv(tmp_path / "verify-ml.csv")
    assert rows[0] == ["L", "beta_re", "beta_im", "eigen_residual", "min_eig_B"]
    assert len(rows) == 1 + 2 * 25
    names = {c["name"] for c in report["checks"]}
    assert {"L=1:eigen_residual", "L=3:min_eig_B"} <= names
    for c in report["checks"]:
        assert "tolerance" in c and "value" in c


def test_discriminate_reports_helstrom_rows(tmp_path):
    code, report = run(tmp_path, "discriminate", "--alpha", "0.5", "--dim", "30")
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "discriminate.csv")
    assert rows[0][:4] == ["alpha", "prior", "helstrom", "fixedpoint"]
    assert float(rows[1][2]) == pytest.approx(0.5 * (1 - np.sqrt(1 - np.exp(-1))), abs=1e-12)
    assert abs(float(rows[1][3]) - float(rows[1][2])) <= 1e-6


def test_verify_ineq9_single_mode(tmp_path):
    code, report = run(tmp_path, "verify-ineq9", "--h", "0.5", "--nmax", "200")
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "verify-ineq9.csv")
    assert rows[1] == ["0.5", "200", "201", "0", "true", "2", "0 1"]


def test_povm_audit_file(tmp_path):
    path = tmp_path / "povm.json"
    path.write_text(povm_to_json(DiscretePOVM.from_matrices([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])))
    code, report = run(tmp_path, "povm-audit", str(path))
    assert code == EXIT_OK
    assert report["results"]["resolution"]["deficits"] == [0.0, 0.0]


def test_povm_audit_grid(tmp_path):
    code, report = run(tmp_path, "povm-audit", "--grid", "4:0.25", "--dim", "10", "--deficit-tol", "1e-3")
    assert code == EXIT_OK
    assert report["config"]["deficit_tol"] == 1e-3


def test_povm_audit_needs_source(tmp_path):
    code, report = run(tmp_path, "povm-audit")
    assert code == EXIT_CONFIG and "error" in report


def test_check_failure_exit_code(tmp_path):
    code, report = run(tmp_path, "verify-ml", "--dim", "20", "--beta-extent", "0.5", "--residual-tol", "0")
    assert code == EXIT_CHECK and not report["passed"]


def test_numerical_failure_exit_code(tmp_path):
    code, report = run(tmp_path, "verify-ml", "--dim", "8", "--beta-extent", "4")
    assert code == EXIT_NUMERIC and "TruncationError" in report["error"]


def test_schema_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "verify-ml", "bogus": 1}))
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_schema_rejects_bad_values(tmp_path):
    assert main(["verify-ml", "--L", "0.5", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["verify-perturb", "--scale", "0.5", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_precedence_flags_over_file_over_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dim": 12, "beta_extent": 0.5, "tol": 1e-7}))
    code, report = run(tmp_path, "verify-ml", "--config", str(cfg), "--dim", "14")
    assert code == EXIT_OK
    used = report["config"]
    assert used["dim"] == 14 and used["tol"] == 1e-7 and used["beta_extent"] == 0.5
    assert used["residual_tol"] == 1e-6
    merged = resolve_config("info", {"tol": 1.0}, {"tol": None, "dim": 5})
    assert merged["tol"] == 1.0 and merged["dim"] == 5 and merged["grid"] == {"extent": 6.0, "step": 0.2}


def test_run_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "verify-ineq9", "h": [[0.3, 0.6]], "nmax_multimode": 10}))
    code, report = run(tmp_path, "run", str(cfg))
    assert code == EXIT_OK and report["config"]["h"] == [[0.3, 0.6]]


def test_csv_formatting():
    text = render_csv(["a", "b", "c"], [[1 / 3, 7, True], [np.float64(2.5e-17), np.int64(3), "x y"]])
    assert text == "a,b,c\n0.333333333333,7,true\n2.5e-17,3,x y\n"


def test_csv_has_no_timing(tmp_path):
    run(tmp_path, "verify-ineq9", "--h", "0.2", "--nmax", "5")
    header = read_csv(tmp_path / "verify-ineq9.csv")[0]
    assert not any("time" in h for h in header)
