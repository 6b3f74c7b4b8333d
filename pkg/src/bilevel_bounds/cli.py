"""Command-line driver: solver grids, lower-bound sweeps, invariant suites and
synthetic dataset generation.

    bilevel-bench solve      --config run.json [--out DIR] [--threads N] [--seed N]
    bilevel-bench lowerbound --config sweep.json [--out DIR] [--threads N] [--seed N]
    bilevel-bench verify     SUITE [--out DIR] [--seed N]
    bilevel-bench dataset-gen --config data.json [--out DIR] [--seed N]

Exit codes: 0 success, 1 run or suite failure, 2 usage or configuration error.
"""
import argparse
import csv
import json
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import applications as apps
from . import lowerbound as lb
from .core import GaussianNoise, Oracle, StochasticOracle
from .errors import BilevelError, ContractError, ParseError
from .solvers import (AccConfig, F2baConfig, acc_config_from_rates, acc_f2ba_plus, aid_hvp, f2ba_plus,
                      gd_penalty, inner_iterations)
from .verify import SUITES, ChainAuditor, run_suite

SCHEMA_VERSION = 1
RESULT_COLUMNS = ["run_id", "instance", "solver", "seed", "fo_count", "hvp_count", "sfo_count", "total_calls",
                  "final_grad_norm", "best_grad_norm", "iterations", "termination", "message"]
HISTORY_COLUMNS = ["iteration", "fo_count", "hvp_count", "sfo_count", "est_norm", "ref_grad_norm",
                   "ref_value", "upper_value"]
SWEEP_COLUMNS = ["cell_id", "param", "value", "solver", "seed", "regime", "K", "T", "n_prime", "kappa_y",
                 "prediction", "fo_count", "hvp_count", "sfo_count", "total_calls", "reached_target",
                 "completion_index", "audit_violations", "floor_violations", "final_grad_norm",
                 "calls_over_prediction", "termination", "message"]


class UsageError(Exception):
    """Bad command line or configuration; maps to exit code 2."""


# ---- config ----------------------------------------------------------------------

def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: top level must be an object")
    return cfg


@dataclass
class RunConfig:
    """Parsed grid: instance specs, solver specs, seeds, budgets and outputs."""

    instances: list
    solvers: list
    seeds: list
    budgets: dict
    output: dict
    base_dir: str
    sweep: dict | None = None

    @classmethod
    def from_dict(cls, cfg, base_dir=".", seed_override=None):
        inst = cfg.get("instances", cfg.get("instance"))
        if inst is None:
            raise UsageError("config: missing key 'instance'")
        insts = inst if isinstance(inst, list) else [inst]
        sol = cfg.get("solvers", cfg.get("solver"))
        if sol is None:
            raise UsageError("config: missing key 'solvers'")
        sols = sol if isinstance(sol, list) else [sol]
        for where, specs, key in (("instance", insts, "kind"), ("solvers", sols, "name")):
            for i, s in enumerate(specs):
                if not isinstance(s, dict) or key not in s:
                    raise UsageError(f"config: {where}[{i}] needs a '{key}' field")
        seeds = cfg.get("seeds", [0])
        if seed_override is not None:
            seeds = [int(seed_override)]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise UsageError("config: 'seeds' must be a nonempty list of integers")
        budgets = dict(cfg.get("budgets", {}))
        for k in ("max_oracle_calls", "max_seconds"):
            if k in budgets and budgets[k] is not None and not budgets[k] > 0:
                raise UsageError(f"config: budgets.{k} must be positive")
        for i, s in enumerate(insts):
            for k in ("train", "val", "path"):
                if k in s and not os.path.exists(os.path.join(base_dir, s[k])):
                    raise UsageError(f"config: instance[{i}].{k}: file {s[k]} not found")
        sweep = cfg.get("sweep")
        if sweep is not None and ("param" not in sweep or not sweep.get("values")):
            raise UsageError("config: sweep needs 'param' and a nonempty 'values' list")
        return cls(insts, sols, seeds, budgets, dict(cfg.get("output", {})), base_dir, sweep)


# ---- instance and solver construction ------------------------------------------

def instance_tag(spec):
    if "tag" in spec:
        return str(spec["tag"])
    keys = sorted(k for k in spec if k not in ("kind", "tag"))
    return spec["kind"] + "".join(f"-{k}={spec[k]}" for k in keys if not isinstance(spec[k], (dict, list)))


def _ncsc_from_spec(s):
    L = s.get("L", 1.0)
    L1 = L[0] if isinstance(L, list) else float(L)
    eps = float(s["eps"])
    small = bool(s.get("allow_small_k", False))
    K = s.get("K")
    if "kappa_eff" in s:
        K = int(round(math.sqrt(float(s["kappa_eff"]))))
        small = True
    if K is not None:
        mu_y, D_lay = lb.ncsc_parameters_for_layout(int(K), int(s.get("T", 2)), eps, L1)
        if "T" not in s and "Delta" not in s:
            raise ContractError("layout form needs T or Delta")
        Delta = float(s["Delta"]) if "Delta" in s else D_lay
    else:
        mu_y = float(s["mu_y"]) if "mu_y" in s else L1 / float(s["kappa"])
        Delta = float(s["Delta"])
    return lb.build_ncsc(int(s.get("p", 1)), L, mu_y, Delta, eps, rotation_seed=s.get("rotation_seed"),
                         allow_small_k=small, n_ups=s.get("n_ups"))


def build_instance(spec, base_dir="."):
    """Problem and (for hard instances) its lower-bound prediction."""
    s = dict(spec)
    kind = s["kind"]
    rel = lambda k: os.path.join(base_dir, s[k])  # noqa: E731
    if kind == "quadratic":
        return apps.random_quadratic_problem(int(s.get("d", 10)), float(s.get("kappa", 10.0)), int(s.get("seed", 0)),
                                             float(s.get("L1", 1.0)), coupling=s.get("coupling", "random")), None
    if kind == "saddle":
        return apps.saddle_problem(int(s.get("d", 4)), float(s.get("neg", -0.1)), float(s.get("quartic", 1.0)),
                                   float(s.get("pos", 1.0))), None
    if kind == "decoupled":
        return apps.decoupled_problem(int(s.get("d", 5)), int(s.get("seed", 0))), None
    if kind == "meta_linreg":
        tasks = apps.TaskCollection.random(int(s.get("n_tasks", 4)), int(s.get("dim", 5)), int(s.get("n_tr", 10)),
                                           int(s.get("n_test", 10)), float(s.get("lam", 1.0)), int(s.get("seed", 0)))
        return apps.meta_linreg(tasks), None
    if kind in ("stackelberg", "graph_energy"):
        rng = np.random.default_rng(int(s.get("seed", 0)))
        n, d = int(s.get("n", 20)), int(s.get("d", 5))
        A, b = rng.standard_normal((n, d)), rng.standard_normal(n)
        if kind == "stackelberg":
            return apps.stackelberg_regression(A, b, rng.uniform(0.5, 2.0, n), float(s.get("lam", 2.0))), None
        return apps.graph_energy(A, b, apps.path_laplacian(n), float(s.get("lam", 1.0))), None
    if kind == "learn2reg":
        if "synth" in s:
            g = s["synth"]
            tr, va = apps.synth_textlike(int(g.get("seed", 0)), int(g["n"]), int(g["m"]), int(g["p"]), int(g["q"]))
        else:
            tr = apps.load_dataset(rel("train"), s.get("n_features"), "train")
            va = apps.load_dataset(rel("val"), tr.n_features, "val")
        return apps.learn2reg(tr, va, s.get("q")), None
    if kind == "ncsc":
        return _ncsc_from_spec(s)
    if kind == "csc":
        return lb.build_csc(float(s.get("L", 1.0)), float(s["mu_y"]), float(s["D"]), float(s["eps"]),
                            s.get("rotation_seed"), bool(s.get("allow_small_k", False)))
    if kind == "scsc":
        return lb.build_scsc(float(s.get("L", 1.0)), float(s["mu_x"]), float(s["mu_y"]), float(s["D"]),
                             float(s["eps"]), s.get("rotation_seed"), bool(s.get("allow_small_k", False)))
    if kind == "stochastic":
        return lb.build_stochastic(float(s.get("L", 155.0)), float(s["mu_y"]), float(s.get("sigma", 0.0)),
                                   float(s["Delta"]), float(s["eps"]), int(s.get("seed", 0)), s.get("d"),
                                   float(s.get("prog_tol", 0.0)))
    if kind == "file":
        return lb.load_instance(rel("path")), None
    raise ContractError(f"unknown instance kind {kind!r}")


def _start_point(problem, spec, seed):
    x0 = spec.get("x0", "zeros")
    if x0 == "zeros":
        return np.zeros(problem.d_x)
    if x0 == "random":
        return float(spec.get("x0_scale", 1.0)) * np.random.default_rng(seed).standard_normal(problem.d_x)
    if isinstance(x0, (int, float)):
        return np.full(problem.d_x, float(x0))
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.d_x,):
        raise ContractError(f"x0 must have {problem.d_x} entries")
    return x0


def _lam(problem, spec):
    if "lam" in spec:
        return float(spec["lam"])
    mult = float(spec.get("lam_mult", 10.0))
    prof = problem.profile
    if prof is not None and prof.mu_y:
        return mult * 2.0 * prof.L1 / prof.mu_y
    L, mu = problem.lower_constants(np.zeros(problem.d_x))
    return mult * 2.0 * max(L, problem.upper_y_smoothness(np.zeros(problem.d_x))) / mu


def _eta(problem, spec, key="eta_x"):
    v = spec.get(key, "auto")
    if v != "auto":
        return float(v)
    if not hasattr(problem, "hyperobjective_smoothness"):
        raise ContractError(f"{key}='auto' needs an instance with a known hyper-objective smoothness")
    return float(spec.get("eta_scale", 1.0)) / problem.hyperobjective_smoothness()


def _inner_k(problem, spec, x0, method):
    v = spec.get("K", "auto")
    if v != "auto":
        return v if isinstance(v, list) else int(v)
    L, mu = problem.lower_constants(x0)
    return max(1, inner_iterations(float(spec.get("gamma", 1e-3)), L / mu, method))


def _make_run_oracle(problem, spec, seed, record, budget):
    noise = spec.get("noise")
    if noise is None:
        return Oracle(problem, record=record, budget=budget)
    kind = noise.get("kind", "gaussian")
    if kind == "gaussian":
        model = GaussianNoise(float(noise.get("sigma", 0.0)))
    elif kind == "spike":
        model = lb.SpikeNoise()
    else:
        raise ContractError(f"unknown noise kind {kind!r}")
    return StochasticOracle(problem, model, seed, record=record, budget=budget)


SOLVER_NAMES = ("f2ba_plus", "f2ba", "gd_penalty", "acc_f2ba_plus", "aid_hvp")


def solver_tag(spec):
    return str(spec.get("tag", spec["name"]))


def run_solver(problem, spec, seed, x0, budgets, target_eps=None, trace=None):
    """Dispatch one solver spec; ``trace`` (e.g. a ChainAuditor) records calls."""
    name = spec["name"]
    budget = budgets.get("max_oracle_calls")
    oracle = _make_run_oracle(problem, spec, seed, False, budget)
    if trace is not None:
        oracle.trace = trace
    kw = dict(oracle=oracle, target_eps=spec.get("target_eps", target_eps),
              max_seconds=budgets.get("max_seconds"))
    T = int(spec.get("T", 1000))
    if name in ("f2ba_plus", "f2ba"):
        inner = spec.get("inner", "agd" if name == "f2ba_plus" else "gd")
        cfg = F2baConfig(eta_x=_eta(problem, spec), lam=_lam(problem, spec), T=T,
                         K=_inner_k(problem, spec, x0, inner), inner=inner)
        return f2ba_plus(problem, cfg, x0, **kw)
    if name == "gd_penalty":
        eta = _eta(problem, spec)
        if spec.get("eta_x", "auto") == "auto":
            L, mu = problem.lower_constants(x0)
            eta /= L / mu
        return gd_penalty(problem, eta, _lam(problem, spec), T, x0, **kw)
    if name == "acc_f2ba_plus":
        lam = _lam(problem, spec)
        if "rates" in spec:
            r = spec["rates"]
            cfg = acc_config_from_rates(float(r["L_F"]), float(r["rho_F"]), float(r["eps"]), lam,
                                        _inner_k(problem, spec, x0, "agd"), problem.d_x, seed=seed,
                                        c=r.get("c"), max_iters=int(r.get("max_iters", 100_000)))
        else:
            fields = {k: spec[k] for k in ("theta", "B", "r", "chi", "max_iters", "perturb_start") if k in spec}
            cfg = AccConfig(eta_x=_eta(problem, spec), lam=lam, T=T, K=_inner_k(problem, spec, x0, "agd"),
                            seed=seed, **fields)
        return acc_f2ba_plus(problem, cfg, x0, **kw)
    if name == "aid_hvp":
        return aid_hvp(problem, _eta(problem, spec), T, int(spec.get("K_y", 10)), int(spec.get("K_v", 10)), x0, **kw)
    raise ContractError(f"unknown solver {name!r}; choose from {', '.join(SOLVER_NAMES)}")


# ---- CSV output ------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(path, columns, rows, kind):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema: bilevel-bounds-{kind} v{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def read_csv(path):
    """Rows of a CSV written by this module, as dicts of strings."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---- solve -----------------------------------------------------------------------

def _solve_cell(args):
    ii, jj, seed, ispec, sspec, budgets, base_dir = args
    run_id = f"i{ii:02d}-s{jj:02d}-seed{seed}"
    row = {"run_id": run_id, "instance": instance_tag(ispec), "solver": solver_tag(sspec), "seed": seed}
    try:
        problem, _ = build_instance(ispec, base_dir)
        x0 = _start_point(problem, ispec, seed)
        rep = run_solver(problem, sspec, seed, x0, budgets, target_eps=budgets.get("target_eps"))
        row.update(fo_count=rep.tally.fo_count, hvp_count=rep.tally.hvp_count, sfo_count=rep.tally.sfo_count,
                   total_calls=rep.tally.total, final_grad_norm=rep.final_ref_grad_norm,
                   best_grad_norm=rep.best_ref_grad_norm, iterations=rep.iterations,
                   termination=rep.termination, message=rep.message)
        hist = [{c: getattr(h, c) for c in HISTORY_COLUMNS} for h in rep.history]
        return row, hist, rep.wall_clock
    except Exception as exc:  # per-cell failure: record and keep going
        row.update(termination="error", message=f"{type(exc).__name__}: {exc}")
        if not isinstance(exc, BilevelError):
            row["message"] += " | " + traceback.format_exc(limit=2).replace("\n", " ")
        return row, [], 0.0


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def _out_dir(cfg, out):
    d = out or cfg.output.get("dir") or "results"
    if not os.path.isabs(d) and not out:
        d = os.path.join(cfg.base_dir, d)
    os.makedirs(d, exist_ok=True)
    return d


def cmd_solve(cfg, out=None, threads=1):
    """Run the instance x solver x seed grid; returns (rows, output dir)."""
    tasks = [(ii, jj, seed, ispec, sspec, cfg.budgets, cfg.base_dir)
             for ii, ispec in enumerate(cfg.instances) for jj, sspec in enumerate(cfg.solvers)
             for seed in cfg.seeds]
    results = _map(_solve_cell, tasks, threads)
    d = _out_dir(cfg, out)
    prefix = cfg.output.get("prefix", "solve")
    results.sort(key=lambda r: r[0]["run_id"])
    rows = [r[0] for r in results]
    write_csv(os.path.join(d, f"{prefix}_results.csv"), RESULT_COLUMNS, rows, "results")
    for row, hist, _ in results:
        if hist:
            write_csv(os.path.join(d, "history", f"{row['run_id']}.csv"), HISTORY_COLUMNS, hist, "history")
    # wall-clock lives apart so that result files are byte-reproducible
    write_csv(os.path.join(d, f"{prefix}_timings.csv"), ["run_id", "wall_clock"],
              [{"run_id": r[0]["run_id"], "wall_clock": r[2]} for r in results], "timings")
    return rows, d


# ---- lowerbound --------------------------------------------------------------------

def fit_loglog_slope(xs, ys):
    x, y = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(x, y, 1)[0])


def _lowerbound_cell(args):
    ci, param, value, jj, seed, ispec, sspec, budgets, base_dir = args
    spec = dict(ispec)
    spec[param] = value
    row = {"cell_id": f"c{ci:02d}-s{jj:02d}-seed{seed}", "param": param, "value": value,
           "solver": solver_tag(sspec), "seed": seed, "regime": spec["kind"]}
    try:
        inst, pred = build_instance(spec, base_dir)
        if pred is not None:
            row.update(regime=pred.regime, K=pred.K, T=pred.T, n_prime=pred.n_prime, prediction=pred.value)
        prof = getattr(inst, "profile", None)
        if prof is not None and prof.mu_y:
            row["kappa_y"] = prof.L1 / prof.mu_y
        auditor = None
        if isinstance(inst, lb.NcscHardInstance) and inst.Qx is None and sspec.get("audit", True):
            auditor = ChainAuditor(inst.layout, inst)
        x0 = _start_point(inst, spec, seed)
        eps = spec.get("target_eps", spec.get("eps"))
        rep = run_solver(inst, sspec, seed, x0, budgets, target_eps=eps, trace=auditor)
        row.update(fo_count=rep.tally.fo_count, hvp_count=rep.tally.hvp_count, sfo_count=rep.tally.sfo_count,
                   total_calls=rep.tally.total, reached_target=rep.termination == "target",
                   final_grad_norm=rep.final_ref_grad_norm, termination=rep.termination, message=rep.message)
        if pred is not None and pred.value > 0:
            row["calls_over_prediction"] = rep.tally.total / pred.value
        if auditor is not None:
            a = auditor.report
            row.update(completion_index=a.completion_index, audit_violations=a.n_violations,
                       floor_violations=len(a.floor_violations))
    except Exception as exc:
        row.update(termination="error", message=f"{type(exc).__name__}: {exc}")
    return row


def sweep_summary(rows):
    """Per-solver log-log slope of calls against the swept value over
    cells that reached the target, plus a monotonicity flag."""
    out = {}
    by = {}
    for r in rows:
        if r.get("reached_target"):
            by.setdefault(r["solver"], {}).setdefault(float(r["value"]), []).append(float(r["total_calls"]))
    for s, d in sorted(by.items()):
        vals = sorted(d)
        means = [float(np.mean(d[v])) for v in vals]
        slope = fit_loglog_slope(vals, means) if len(vals) >= 2 else None
        out[s] = {"values": vals, "mean_calls": means, "slope": slope,
                  "monotone": bool(all(b > a for a, b in zip(means, means[1:])))}
    return out


def cmd_lowerbound(cfg, out=None, threads=1):
    if cfg.sweep is None:
        sweep = {"param": "_none", "values": [0]}
    else:
        sweep = cfg.sweep
    tasks = []
    ci = 0
    for ispec in cfg.instances:
        for value in sweep["values"]:
            for jj, sspec in enumerate(cfg.solvers):
                for seed in cfg.seeds:
                    tasks.append((ci, sweep["param"], value, jj, seed, ispec, sspec, cfg.budgets, cfg.base_dir))
            ci += 1
    rows = _map(_lowerbound_cell, tasks, threads)
    rows.sort(key=lambda r: r["cell_id"])
    d = _out_dir(cfg, out)
    prefix = cfg.output.get("prefix", "lowerbound")
    write_csv(os.path.join(d, f"{prefix}_sweep.csv"), SWEEP_COLUMNS, rows, "sweep")
    summary = sweep_summary(rows)
    with open(os.path.join(d, f"{prefix}_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows, summary, d


# ---- dataset-gen -------------------------------------------------------------------

def cmd_dataset_gen(cfg, out=None, seed=None):
    g = dict(cfg.get("dataset", cfg))
    try:
        n, m, p, q = (int(g[k]) for k in ("n", "m", "p", "q"))
    except KeyError as exc:
        raise UsageError(f"dataset config: missing key {exc}") from None
    s = int(seed if seed is not None else g.get("seed", 0))
    tr, va = apps.synth_textlike(s, n, m, p, q, float(g.get("sparsity", 0.05)), int(g.get("n_informative", 4)),
                                 g.get("n_spurious"), float(g.get("scale", 3.0)))
    d = out or g.get("dir", ".")
    os.makedirs(d, exist_ok=True)
    paths = (os.path.join(d, g.get("train_name", "train.txt")), os.path.join(d, g.get("val_name", "val.txt")))
    apps.write_dataset(tr, paths[0])
    apps.write_dataset(va, paths[1])
    return paths


# ---- entry point -----------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="bilevel-bench", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "lowerbound", "dataset-gen"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int)
    sp = sub.add_parser("verify")
    sp.add_argument("suite")
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    return ap


def _run(args):
    if args.command == "verify":
        if args.suite not in SUITES:
            raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
        results = run_suite(args.suite, seed=args.seed)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, f"verify_{args.suite}.json"), "w", encoding="utf-8") as fh:
                json.dump([r.__dict__ for r in results], fh, indent=2)
                fh.write("\n")
        return 0 if all(r.passed for r in results) else 1
    raw = load_config(args.config)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.command == "dataset-gen":
        paths = cmd_dataset_gen(raw, args.out, args.seed)
        print("wrote " + " ".join(paths))
        return 0
    cfg = RunConfig.from_dict(raw, os.path.dirname(os.path.abspath(args.config)), args.seed)
    if args.command == "solve":
        rows, d = cmd_solve(cfg, args.out, args.threads)
        n_err = sum(r["termination"] == "error" for r in rows)
        print(f"{len(rows)} runs, {n_err} errors; results in {d}")
        return 1 if n_err else 0
    rows, summary, d = cmd_lowerbound(cfg, args.out, args.threads)
    for s, v in summary.items():
        print(f"{s}: slope {v['slope']}, monotone {v['monotone']}")
    n_err = sum(r["termination"] == "error" for r in rows)
    n_viol = sum(int(r.get("audit_violations") or 0) for r in rows)
    print(f"{len(rows)} cells, {n_err} errors, {n_viol} audit violations; results in {d}")
    return 1 if n_err or n_viol else 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BilevelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
