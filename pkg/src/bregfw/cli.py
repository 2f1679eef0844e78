"""Command line entry point.

    bregfw run <config.toml>              run the experiment, write traces and summary
    bregfw check <config.toml>            diagnostics for the configured problem (JSON)
    bregfw lmo-test <region>              LMO against brute-force vertex enumeration
    bregfw nu-est <kernel> <region>       sampled scaling exponent of a kernel

Regions and kernels are written as ``kind:key=value,...``, for example
``ksparse:n=6,K=3``, ``box:n=4,lower=-1,upper=1`` or ``quartic:quad_coef=2``.
Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from .core import BregFWError, SolveConfig, UnknownKind
from .diagnostics import audit_linesearch_budget, check_bound, check_descent_lemma, gradient_fd_check
from .experiments import (ConfigError, build_problem, initial_point, is_diverged, load_config, run_experiment,
                          run_solver, write_outputs)
from .feasible import Box, KSparsePolytope, L2Ball, NuclearNormBall, SimplexLeqOne, bregman_diameter_sq
from .kernels import estimate_nu, make_kernel

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("bregfw")


def _parse_descriptor(text):
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"expected key=value in {text!r}, got {item!r}")
        try:
            params[key.strip()] = int(val)
        except ValueError:
            params[key.strip()] = float(val)
    return kind.strip().lower(), params


def parse_region(text):
    kind, p = _parse_descriptor(text)
    if kind == "simplex":
        return SimplexLeqOne(p.get("n", 3))
    if kind == "box":
        n = p.get("n", 3)
        return Box(p.get("lower", 0.0), p.get("upper", 1.0), shape=(n,))
    if kind == "ksparse":
        return KSparsePolytope(p.get("n", 4), p.get("K", 2))
    if kind == "l2ball":
        return L2Ball(p.get("n", 3), p.get("b_max", 1.0))
    if kind == "nuclear":
        return NuclearNormBall((p.get("rows", 3), p.get("cols", 2)), p.get("xi", 1.0))
    raise UnknownKind(f"unknown region {kind!r}")


def parse_kernel(text):
    kind, params = _parse_descriptor(text)
    return make_kernel(kind, **params)


def _brute_lmo_discrepancy(region, n_dirs, seed):
    verts = np.array(region.enumerate_vertices())
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_dirs):
        a = rng.standard_normal(region.shape)
        best = float(np.min(verts.reshape(len(verts), -1) @ a.ravel()))
        got = float(np.dot(region.lmo(a).ravel(), a.ravel()))
        worst = max(worst, abs(got - best))
    return worst, len(verts)


def cmd_lmo_test(args):
    region = parse_region(args.region)
    worst, nv = _brute_lmo_discrepancy(region, args.directions, args.seed)
    ok = worst <= args.tol
    print(json.dumps({"region": repr(region), "vertices": nv, "directions": args.directions,
                      "max_discrepancy": worst, "passed": ok}))
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_nu_est(args):
    kernel = parse_kernel(args.kernel)
    region = parse_region(args.region)
    est = estimate_nu(kernel, region, n_pairs=args.pairs, seed=args.seed)
    x, y, g = est.worst_pair
    print(json.dumps({"kernel": kernel.name, "region": repr(region), "nu_hat": est.nu_hat,
                      "worst_pair": {"x": x.tolist(), "y": y.tolist(), "gamma": g}}))
    return EXIT_OK


def cmd_run(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    out = run_experiment(cfg)
    paths = write_outputs(cfg, out)
    print(f"{'solver':<20} {'primal gap':>24} {'FW gap':>24} {'time (s)':>22}  runs")
    for row in out.summary:
        print(f"{row['label']:<20} {row['primal_gap_mean']:.4e} ± {row['primal_gap_std']:.1e}"
              f"   {row['fw_gap_mean']:.4e} ± {row['fw_gap_std']:.1e}"
              f"   {row['time_mean']:.4e} ± {row['time_std']:.1e}  {row['runs']}"
              + (f" ({row['diverged']} diverged)" if row["diverged"] else "")
              + (f" ({row['failed']} failed)" if row["failed"] else ""))
    print(f"f* source: {out.fstar_source}; wrote {len(paths)} files to {cfg.output_dir}")
    return EXIT_OK if all(r.result is not None for r in out.rows) else EXIT_RUNTIME


def _finite_or_none(v):
    return v if isinstance(v, (int, float)) and math.isfinite(v) else None


def cmd_check(args):
    cfg = load_config(args.config)
    problem, data = build_problem(cfg, cfg.seed)
    obj, kernel, region = problem.objective, problem.kernel, problem.region
    rng = np.random.default_rng(cfg.seed)
    pts = region.sample_interior(rng, args.points)
    report = {"problem": data.meta, "kernel": kernel.name, "region": repr(region)}
    report["gradient_fd_max_error"] = max(gradient_fd_check(obj, x) for x in pts)
    L = problem.constants.smad_L
    if L is not None:
        viol, worst = check_descent_lemma(obj, kernel, L, region, n_pairs=args.pairs, seed=cfg.seed)
        report["descent_lemma"] = {"L": L, "violations": viol, "worst_ratio": worst}
    try:
        report["nu_hat"] = estimate_nu(kernel, region, n_pairs=args.pairs // 4 or 1, seed=cfg.seed).nu_hat
    except BregFWError as exc:
        report["nu_hat"] = None
        report["nu_error"] = str(exc)
    D2 = bregman_diameter_sq(region, kernel, seed=cfg.seed)
    report["bregman_diameter_sq_estimate"] = D2

    runs = []
    x0 = initial_point(problem, cfg.x0)
    for s in cfg.solvers:
        entry = {"label": s.label}
        try:
            res = run_solver(problem, s, SolveConfig(max_iters=s.max_iters, fw_gap_tolerance=cfg.tolerance), x0)
        except BregFWError as exc:
            entry["error"] = str(exc)
            runs.append(entry)
            continue
        entry.update({"termination": res.termination.value, "iterations": res.last.t,
                      "final_fw_gap": res.last.fw_gap, "diverged": is_diverged(res)})
        if s.rule is not None and s.rule.adaptive:
            audit = audit_linesearch_budget(res, s.rule)
            entry["linesearch_budget"] = {"violations": audit.violations, "per_iteration": audit.per_iteration}
        if (s.rule is not None and s.rule.kind.value == "open_loop" and s.rule.open_loop_offset == 0
                and data.fstar is not None and L is not None):
            entry["sublinear_convex_bound"] = check_bound(res, "sublinear_convex", fstar=data.fstar, L=L,
                                                          D2=D2, nu=1.0, t_min=1).to_dict()
        runs.append(entry)
    report["runs"] = runs
    print(json.dumps(report, indent=2, default=_finite_or_none))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="bregfw", description="Frank-Wolfe with Bregman step sizes")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="diagnostics for a config's problem")
    p.add_argument("config")
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--pairs", type=int, default=200)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("lmo-test", help="brute-force LMO audit")
    p.add_argument("region")
    p.add_argument("--directions", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_lmo_test)

    p = sub.add_parser("nu-est", help="estimate the scaling exponent of a kernel")
    p.add_argument("kernel")
    p.add_argument("region")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_nu_est)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (UnknownKind, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BregFWError, OSError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
