import json
import os

import pytest

from bilevel_bounds import cli
from bilevel_bounds.applications import load_dataset
from bilevel_bounds.lowerbound import ncsc_parameters_for_layout


def write_config(path, cfg):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh)
    return str(path)


SMALL_GRID = {
    "instance": {"kind": "quadratic", "d": 5, "kappa": 10.0, "seed": 1},
    "solvers": [{"name": "f2ba_plus", "eta_x": 0.01, "K": 5, "T": 30},
                {"name": "gd_penalty", "eta_x": 0.001, "T": 30}],
    "seeds": [0, 1, 2],
}


def csv_body(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def test_solve_grid_cardinality_and_schema(tmp_path):
    path = write_config(tmp_path / "run.json", SMALL_GRID)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "a")]) == 0
    res = tmp_path / "a" / "solve_results.csv"
    first, header = csv_body(res).splitlines()[:2]
    assert first.startswith("# schema:") and "v1" in first
    assert header.split(",") == cli.RESULT_COLUMNS
    rows = cli.read_csv(res)
    assert len(rows) == 6
    assert {(r["solver"], r["seed"]) for r in rows} == {(s, str(k)) for s in ("f2ba_plus", "gd_penalty")
                                                          for k in (0, 1, 2)}
    hist = sorted(os.listdir(tmp_path / "a" / "history"))
    assert len(hist) == 6
    h = cli.read_csv(tmp_path / "a" / "history" / hist[0])
    assert list(h[0]) == cli.HISTORY_COLUMNS and len(h) == 31


def test_solve_rerun_byte_identical(tmp_path):
    path = write_config(tmp_path / "run.json", SMALL_GRID)
    for d in ("a", "b"):
        assert cli.main(["solve", "--config", path, "--out", str(tmp_path / d)]) == 0
    assert csv_body(tmp_path / "a" / "solve_results.csv") == csv_body(tmp_path / "b" / "solve_results.csv")
    for name in os.listdir(tmp_path / "a" / "history"):
        assert csv_body(tmp_path / "a" / "history" / name) == csv_body(tmp_path / "b" / "history" / name)


def test_solve_threads_match_serial(tmp_path):
    path = write_config(tmp_path / "run.json", SMALL_GRID)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    assert csv_body(tmp_path / "a" / "solve_results.csv") == csv_body(tmp_path / "b" / "solve_results.csv")


def test_per_run_failure_recorded(tmp_path):
    cfg = dict(SMALL_GRID, solvers=[{"name": "f2ba_plus", "eta_x": 0.01, "K": 5, "T": 5},
                                    {"name": "no_such_solver"}], seeds=[0])
    path = write_config(tmp_path / "run.json", cfg)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "a")]) == 1
    rows = cli.read_csv(tmp_path / "a" / "solve_results.csv")
    assert [r["termination"] for r in rows] == ["completed", "error"]
    assert "no_such_solver" in rows[1]["message"]


def test_usage_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"instance": {"kind": "quadratic"},\n "solvers": [}')
    assert cli.main(["solve", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["solve", "--config", write_config(tmp_path / "c.json", {"solvers": []})]) == 2
    cfg = dict(SMALL_GRID, budgets={"max_oracle_calls": 0})
    assert cli.main(["solve", "--config", write_config(tmp_path / "d.json", cfg)]) == 2
    cfg = dict(SMALL_GRID, instance={"kind": "learn2reg", "train": "nope.txt", "val": "nope.txt"})
    assert cli.main(["solve", "--config", write_config(tmp_path / "e.json", cfg)]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["verify", "no_such_suite"]) == 2


def test_verify_exit_codes(tmp_path, capsys):
    assert cli.main(["verify", "coefficients", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    with open(tmp_path / "verify_coefficients.json", encoding="utf-8") as fh:
        assert all(r["passed"] for r in json.load(fh))


def test_verify_failure_exit_1(monkeypatch):
    from bilevel_bounds.verify import CheckResult

    monkeypatch.setattr(cli, "run_suite", lambda name, seed=0: [CheckResult("x", False, "forced")])
    assert cli.main(["verify", "chains"]) == 1


def test_lowerbound_sweep_rows(tmp_path):
    eps = 1e-2
    cfg = {"instance": {"kind": "ncsc", "p": 1, "eps": eps, "T": 3},
           "sweep": {"param": "kappa_eff", "values": [4, 16]},
           "solvers": [{"name": "gd_penalty", "eta_scale": 3.0, "lam_mult": 1.5, "T": 20000}],
           "seeds": [0]}
    path = write_config(tmp_path / "lb.json", cfg)
    assert cli.main(["lowerbound", "--config", path, "--out", str(tmp_path / "o")]) == 0
    rows = cli.read_csv(tmp_path / "o" / "lowerbound_sweep.csv")
    assert len(rows) == 2
    for r in rows:
        assert r["audit_violations"] == "0" and r["termination"] == "target"
        K = int(round(float(r["value"]) ** 0.5))
        assert int(r["K"]) == K and int(r["T"]) == 3
        mu_y, Delta = ncsc_parameters_for_layout(K, 3, eps)
        assert float(r["prediction"]) == pytest.approx((1.0 / mu_y) ** 2 * Delta / eps**2, rel=1e-12)
        assert int(r["completion_index"]) >= int(r["n_prime"])
    with open(tmp_path / "o" / "lowerbound_summary.json", encoding="utf-8") as fh:
        summary = json.load(fh)
    assert summary["gd_penalty"]["values"] == [4.0, 16.0]


def test_lowerbound_regime_error_per_cell(tmp_path):
    cfg = {"instance": {"kind": "scsc", "mu_x": 1e-4, "mu_y": 1e-3, "D": 1.0, "eps": 1e-6},
           "solvers": [{"name": "gd_penalty", "eta_x": 0.1, "T": 2}]}
    path = write_config(tmp_path / "lb.json", cfg)
    assert cli.main(["lowerbound", "--config", path, "--out", str(tmp_path / "o")]) == 1
    rows = cli.read_csv(tmp_path / "o" / "lowerbound_sweep.csv")
    assert rows[0]["termination"] == "error" and "RegimeError" in rows[0]["message"]


def test_dataset_gen(tmp_path):
    cfg = {"dataset": {"n": 30, "m": 20, "p": 12, "q": 3, "seed": 4}}
    path = write_config(tmp_path / "g.json", cfg)
    assert cli.main(["dataset-gen", "--config", path, "--out", str(tmp_path / "d")]) == 0
    tr = load_dataset(str(tmp_path / "d" / "train.txt"), 12)
    va = load_dataset(str(tmp_path / "d" / "val.txt"), 12)
    assert tr.n == 30 and va.n == 20 and tr.n_features == 12
    assert cli.main(["dataset-gen", "--config", write_config(tmp_path / "h.json", {"n": 3})]) == 2


def test_agd_row_fewer_calls_than_gd_row(tmp_path):
    cfg = {"instance": {"kind": "quadratic", "d": 10, "kappa": 1e4, "seed": 0, "coupling": "aligned"},
           "solvers": [{"name": "f2ba_plus", "eta_x": 5.0, "gamma": 0.01, "T": 200},
                       {"name": "f2ba", "eta_x": 5.0, "gamma": 0.01, "T": 200}],
           "budgets": {"target_eps": 1e-3}}
    path = write_config(tmp_path / "run.json", cfg)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "a")]) == 0
    agd_row, gd_row = cli.read_csv(tmp_path / "a" / "solve_results.csv")
    assert agd_row["termination"] == gd_row["termination"] == "target"
    assert int(agd_row["fo_count"]) < int(gd_row["fo_count"])
