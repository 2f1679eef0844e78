"""Experiment configuration, synthetic data generators, batch runs and trace output."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import objectives as objs
from .core import BregFWError, RECORD_FIELDS, RunResult, SolveConfig, make_problem
from .feasible import Box, KSparsePolytope, L2Ball, NuclearNormBall, SimplexLeqOne
from .kernels import make_kernel
from .solvers import SOLVERS
from .stepsize import RuleKind, StepRuleSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


class ConfigError(BregFWError):
    """Aggregated configuration errors; ``errors`` holds one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class UnknownRecipe(BregFWError):
    pass


# ---------------------------------------------------------------- datasets

@dataclass
class Dataset:
    recipe: str
    seed: int
    params: dict
    arrays: dict
    x_star: Optional[np.ndarray] = None
    fstar: Optional[float] = None

    def objective(self):
        a = self.arrays
        if self.recipe == "kl_inverse":
            return objs.KLInverse(a["A"], a["b"])
        if self.recipe == "lp_loss":
            return objs.LpLoss(a["A"], a["b"], p=self.params.get("p", 1.1))
        if self.recipe == "phase_retrieval":
            return objs.PhaseRetrieval(a["A"], a["b"])
        if self.recipe == "low_rank":
            return objs.LowRank(a["M"], self.params["r"])
        if self.recipe == "nmf":
            return objs.NMF(a["V"], self.params["r"])
        if self.recipe == "quadratic":
            return objs.Quadratic(a["Q"], a["c"])
        raise UnknownRecipe(self.recipe)

    @property
    def meta(self) -> dict:
        return {"recipe": self.recipe, "seed": self.seed, **self.params}


def _kl_inverse(rng, m, n, scale=0.8):
    A = np.abs(rng.standard_normal((m, n)))
    A /= A.sum(axis=0, keepdims=True)
    xt = rng.uniform(size=n)
    x_star = scale * xt / xt.sum()
    return {"A": A, "b": A @ x_star}, x_star, 0.0


def _lp_loss(rng, m, n, p=1.1, scale=0.8, radius=1.0):
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    xt = rng.standard_normal(n)
    x_star = scale * radius * xt / np.linalg.norm(xt)
    return {"A": A, "b": A @ x_star}, x_star, 0.0


def _phase_retrieval(rng, m, n, normalize=True):
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    x_star = rng.uniform(size=n)
    if normalize:
        x_star /= x_star.sum()
    return {"A": A, "b": (A @ x_star) ** 2}, x_star, 0.0


def _low_rank(rng, n, r):
    X = rng.uniform(size=(n, r))
    X /= np.linalg.norm(X, axis=0, keepdims=True)
    return {"M": X @ X.T}, X, 0.0


def _nmf(rng, m, n, r):
    W = rng.uniform(size=(m, r))
    W /= np.linalg.norm(W, axis=0, keepdims=True)
    H = rng.dirichlet(np.ones(r), size=n).T
    return {"V": W @ H}, np.concatenate([W.ravel(), H.ravel()]), 0.0


def _quadratic(rng, n, mu=1.0, L=10.0, interior=True):
    """Q with spectrum in [mu, L]; minimiser strictly inside [0, 1]^n or outside it."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = U @ np.diag(np.linspace(mu, L, n)) @ U.T
    c = rng.uniform(0.2, 0.8, size=n) if interior else rng.uniform(-1.0, 2.0, size=n)
    return {"Q": Q, "c": c}, c, 0.0


RECIPES = {
    "kl_inverse": _kl_inverse,
    "lp_loss": _lp_loss,
    "phase_retrieval": _phase_retrieval,
    "low_rank": _low_rank,
    "nmf": _nmf,
    "quadratic": _quadratic,
}


def generate_dataset(recipe, seed: int) -> Dataset:
    """Deterministic synthetic data.  ``recipe`` is a name or a dict with a
    ``name`` key plus the generator's dimensions, e.g. ``{"name": "kl_inverse",
    "m": 20, "n": 50}``."""
    if isinstance(recipe, str):
        recipe = {"name": recipe}
    params = {k: v for k, v in recipe.items() if k != "name"}
    name = recipe.get("name")
    if name not in RECIPES:
        raise UnknownRecipe(f"unknown recipe {name!r}; known: {sorted(RECIPES)}")
    rng = np.random.default_rng(seed)
    try:
        arrays, x_star, fstar = RECIPES[name](rng, **params)
    except TypeError as exc:
        raise ConfigError([f"recipe {name}: {exc}"]) from None
    if name == "quadratic":
        if not params.get("interior", True):
            fstar = None
    return Dataset(recipe=name, seed=int(seed), params=params, arrays=arrays, x_star=x_star, fstar=fstar)


def load_dataset(objective: str, files: dict, base_dir: str = ".", params: Optional[dict] = None) -> Dataset:
    """Load arrays from files: ``.npy`` binary or whitespace/comma separated text."""
    arrays = {}
    for key, path in files.items():
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        try:
            if full.endswith(".npy"):
                arrays[key] = np.load(full)
            else:
                with open(full) as fh:
                    first = fh.readline()
                arrays[key] = np.loadtxt(full, delimiter="," if "," in first else None, ndmin=1)
        except OSError as exc:
            raise OSError(f"{full}: {exc}") from exc
    return Dataset(recipe=objective, seed=-1, params=dict(params or {}), arrays=arrays)


# ---------------------------------------------------------------- config

OBJECTIVES = set(RECIPES) | set(objs.TOYS)
REGIONS = {"simplex", "l2ball", "box", "ksparse", "nuclear"}
SOLVER_IDS = set(SOLVERS)
KERNEL_IDS = {"recommended", "euclidean", "entropy", "burg", "quartic", "quartic_scaled", "objective"}
RULE_FIELDS = {"L", "nu", "beta", "eta", "tau", "L_init", "kappa_min", "horizon", "strict_alg2", "max_inner",
               "open_loop_offset"}


@dataclass
class SolverSpec:
    solver: str
    label: str
    rule: Optional[StepRuleSpec] = None
    step: Optional[float] = None  # md / pgd
    max_iters: int = 1000
    x0: object = None


@dataclass
class ExperimentConfig:
    objective: str
    recipe: Optional[dict]
    files: Optional[dict]
    seed: int
    fstar: Optional[float]
    objective_params: dict
    region: dict
    kernel: dict
    solvers: list
    tolerance: float = 1e-7
    repetitions: int = 1
    output_dir: str = "results"
    format: str = "csv"
    x0: object = "default"
    base_dir: str = "."


def _line_of(text, key):
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith(key) or stripped.startswith(f"[{key}") or stripped.startswith(f"[[{key}"):
            return i
    return None


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse a TOML experiment description; all problems are reported together.

    Sections: ``[problem]`` (objective, recipe or files, seed, fstar, params),
    ``[region]`` (kind + parameters), ``[kernel]`` (kind + parameters),
    ``[[solvers]]`` (id, label, rule, step-rule fields, max_iters) and
    ``[run]`` (tolerance, repetitions, output_dir, format, x0).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    errors = []

    def err(section, key, msg):
        line = _line_of(text, key) or _line_of(text, section)
        errors.append(f"{section}.{key}: {msg}" + (f" (line {line})" if line else ""))

    prob = doc.get("problem", {})
    objective = prob.get("objective")
    if objective not in OBJECTIVES:
        err("problem", "objective", f"unknown objective {objective!r}; known: {sorted(OBJECTIVES)}")
    recipe = prob.get("recipe")
    files = prob.get("files")
    if objective in RECIPES and recipe is None and files is None:
        recipe = {}
    if recipe is not None:
        recipe = dict(recipe, name=objective)
    if files is not None:
        for key, path in files.items():
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(full):
                err("problem", "files", f"{key}: file {full} does not exist")
    seed = prob.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        err("problem", "seed", "must be a nonnegative integer")

    region = dict(doc.get("region", {}))
    rkind = region.get("kind")
    if rkind not in REGIONS:
        err("region", "kind", f"unknown region {rkind!r}; known: {sorted(REGIONS)}")
    if rkind == "ksparse":
        K, n = region.get("K"), region.get("n")
        if K is None:
            err("region", "K", "ksparse needs K")
        elif n is not None and K > n:
            err("region", "K", f"K={K} exceeds n={n}")
    if rkind == "box" and ("lower" not in region or "upper" not in region):
        err("region", "kind", "box needs lower and upper")

    kernel = dict(doc.get("kernel", {"kind": "recommended"}))
    if kernel.get("kind", "recommended") not in KERNEL_IDS:
        err("kernel", "kind", f"unknown kernel {kernel.get('kind')!r}")

    run = doc.get("run", {})
    tol = run.get("tolerance", 1e-7)
    if not isinstance(tol, (int, float)) or tol < 0:
        err("run", "tolerance", "must be a nonnegative number")
    reps = run.get("repetitions", 1)
    if not isinstance(reps, int) or reps < 1:
        err("run", "repetitions", "must be a positive integer")
    fmt = run.get("format", "csv")
    if fmt not in ("csv", "json"):
        err("run", "format", "must be csv or json")

    solvers = []
    raw = doc.get("solvers", [])
    if not raw:
        err("solvers", "id", "at least one [[solvers]] entry is required")
    for i, s in enumerate(raw):
        sid = s.get("id")
        if sid not in SOLVER_IDS:
            err("solvers", "id", f"entry {i}: unknown solver id {sid!r}; known: {sorted(SOLVER_IDS)}")
            continue
        max_iters = s.get("max_iters", run.get("max_iters", 1000))
        if not isinstance(max_iters, int) or max_iters < 1:
            err("solvers", "max_iters", f"entry {i}: must be a positive integer")
        label = s.get("label", f"{sid}-{s.get('rule', '')}".rstrip("-"))
        spec = None
        if sid in ("fw", "afw"):
            rule = s.get("rule", "adaptive_bregman")
            kwargs = {k: v for k, v in s.items() if k in RULE_FIELDS}
            unknown = set(s) - RULE_FIELDS - {"id", "label", "rule", "max_iters", "x0"}
            if unknown:
                err("solvers", "id", f"entry {i}: unknown keys {sorted(unknown)}")
            try:
                spec = StepRuleSpec(kind=RuleKind(rule), **kwargs)
            except ValueError as exc:
                err("solvers", "rule", f"entry {i}: {exc}")
                continue
            except BregFWError as exc:
                err("solvers", "rule", f"entry {i}: {exc}")
                continue
        solvers.append(SolverSpec(solver=sid, label=label, rule=spec, step=s.get("step"),
                                  max_iters=max_iters, x0=s.get("x0")))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        objective=objective, recipe=recipe, files=files, seed=seed, fstar=prob.get("fstar"),
        objective_params=dict(prob.get("params", {})), region=region, kernel=kernel, solvers=solvers,
        tolerance=float(tol), repetitions=reps, output_dir=run.get("output_dir", "results"), format=fmt,
        x0=run.get("x0", "default"), base_dir=base_dir,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------- building problems

def build_region(spec: dict, objective):
    kind = spec["kind"]
    shape = objective.shape
    n = spec.get("n", int(np.prod(shape)))
    if kind == "simplex":
        return SimplexLeqOne(n)
    if kind == "l2ball":
        radius = spec.get("radius")
        return L2Ball(n, radius**2 if radius is not None else spec.get("b_max", 1.0))
    if kind == "box":
        return Box(spec["lower"], spec["upper"], shape=shape if np.isscalar(spec["lower"]) else None)
    if kind == "ksparse":
        return KSparsePolytope(n, spec["K"])
    if kind == "nuclear":
        xi = spec.get("xi")
        if xi is None:
            M = getattr(objective, "M", None)
            if M is None:
                raise ConfigError(["region.xi: nuclear ball needs xi"])
            xi = spec.get("xi_scale", 10.0) * float(np.linalg.eigvalsh(M)[-1])
        return NuclearNormBall(shape, xi)
    raise ConfigError([f"region.kind: unknown region {kind!r}"])


def build_kernel(spec: dict, objective):
    kind = spec.get("kind", "recommended")
    if kind == "recommended":
        return objective.recommended_kernel()
    params = {k: v for k, v in spec.items() if k != "kind"}
    return make_kernel(kind, objective=objective, **params)


def build_problem(cfg: ExperimentConfig, seed: int):
    """Returns (problem, dataset)."""
    if cfg.objective in objs.TOYS:
        data = Dataset(recipe=cfg.objective, seed=seed, params={}, arrays={})
        objective = objs.make_toy(cfg.objective)
        data.fstar = objective.theory().f_star
    elif cfg.files is not None:
        data = load_dataset(cfg.objective, cfg.files, cfg.base_dir, dict(cfg.objective_params))
        objective = data.objective()
    else:
        recipe = dict(cfg.recipe or {}, name=cfg.objective)
        data = generate_dataset(recipe, seed)
        objective = data.objective()
    region = build_region(cfg.region, objective)
    if data.fstar is not None and data.x_star is not None:
        # a planted optimum only gives f* when it is feasible for the configured region
        x_star = np.asarray(data.x_star, dtype=float)
        if x_star.size == int(np.prod(region.shape)) and not region.contains(x_star.reshape(region.shape), 1e-9):
            data.fstar = None
    kernel = build_kernel(cfg.kernel, objective)
    problem = make_problem(objective, kernel, region, constants=objective.theory())
    return problem, data


def initial_point(problem, how):
    region = problem.region
    shape = region.shape
    if how is None or how == "default":
        if isinstance(region, SimplexLeqOne):
            return np.full(shape, 1.0 / shape[0])
        return region.lmo(problem.objective.gradient(np.zeros(shape)))
    if how == "uniform":
        return np.full(shape, 1.0 / int(np.prod(shape)))
    if how == "lmo":
        return region.lmo(problem.objective.gradient(np.zeros(shape)))
    if how == "lmo_ones":
        return region.lmo(np.ones(shape))
    return np.asarray(how, dtype=float).reshape(shape)


def run_solver(problem, solver: SolverSpec, config: SolveConfig, x0):
    if solver.solver in ("fw", "afw"):
        start = x0
        if solver.solver == "afw" and not _is_vertex(problem, x0):
            start = problem.region.lmo(problem.objective.gradient(x0))
        return SOLVERS[solver.solver](problem, solver.rule, config, start)
    return SOLVERS[solver.solver](problem, solver.step, config, x0)


def _is_vertex(problem, x):
    return np.array_equal(problem.region.lmo(-np.asarray(x)), x)


# ---------------------------------------------------------------- running

def is_diverged(result: RunResult) -> bool:
    """A run that never met the tolerance and whose FW gap did not decrease:
    the median over the final quarter of records is at least the median over
    the first quarter."""
    if result.termination.value == "GapTolerance":
        return False
    g = result.series("fw_gap")
    k = len(g) // 4
    if k < 2:
        return False
    return bool(np.median(g[-k:]) >= np.median(g[:k]))


@dataclass
class RunRow:
    label: str
    repetition: int
    seed: int
    result: Optional[RunResult]
    error: Optional[str] = None


@dataclass
class ExperimentOutput:
    rows: list
    summary: list
    fstar: Optional[float]
    fstar_source: str
    meta: dict = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Every solver on every repetition; repetition k uses seed ``cfg.seed + k``.

    Failing runs are recorded with their error message and left out of the
    summary.  Primal gaps use the configured f*, the generator's known
    optimum, or the best value seen across all runs, in that order; the choice
    is reported as ``fstar_source``.
    """
    rows = []
    fstars = []
    metas = []
    for rep in range(cfg.repetitions):
        seed = cfg.seed + rep
        problem, data = build_problem(cfg, seed)
        metas.append(data.meta)
        fstars.append(data.fstar)
        x0 = initial_point(problem, cfg.x0)
        for s in cfg.solvers:
            sc = SolveConfig(max_iters=s.max_iters, fw_gap_tolerance=cfg.tolerance, rng_seed=seed)
            try:
                res = run_solver(problem, s, sc, x0 if s.x0 is None else initial_point(problem, s.x0))
                res.info.update({"label": s.label, "seed": seed, "repetition": rep, "diverged": is_diverged(res)})
                rows.append(RunRow(s.label, rep, seed, res))
            except (BregFWError, ValueError, FloatingPointError) as exc:
                log.warning("%s (repetition %d) failed: %s", s.label, rep, exc)
                rows.append(RunRow(s.label, rep, seed, None, f"{type(exc).__name__}: {exc}"))

    if cfg.fstar is not None:
        fstar, source = float(cfg.fstar), "config"
    elif all(f is not None for f in fstars) and fstars:
        fstar, source = float(fstars[0]), "generator"
    else:
        done = [r.result for r in rows if r.result is not None]
        fstar = min((min(x.primal for x in r.records) for r in done), default=math.nan)
        source = "best_found"
    per_rep_fstar = fstars if source == "generator" else [fstar] * cfg.repetitions

    summary = []
    for s in cfg.solvers:
        mine = [r for r in rows if r.label == s.label and r.result is not None]
        pg = np.array([r.result.last.primal - per_rep_fstar[r.repetition] for r in mine])
        fg = np.array([r.result.last.fw_gap for r in mine])
        wt = np.array([r.result.last.elapsed_seconds for r in mine])
        summary.append({
            "label": s.label,
            "runs": len(mine),
            "failed": sum(1 for r in rows if r.label == s.label and r.result is None),
            "primal_gap_mean": _mean(pg), "primal_gap_std": _std(pg),
            "fw_gap_mean": _mean(fg), "fw_gap_std": _std(fg),
            "time_mean": _mean(wt), "time_std": _std(wt),
            "diverged": sum(1 for r in mine if r.result.info["diverged"]),
            "fstar_source": source,
        })
    return ExperimentOutput(rows=rows, summary=summary, fstar=fstar, fstar_source=source,
                            meta={"datasets": metas, "fstar": fstar, "fstar_source": source})


def _mean(a):
    return float(np.mean(a)) if a.size else math.nan


def _std(a):
    return float(np.std(a)) if a.size else math.nan


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    if hasattr(v, "value"):
        return v.value
    return str(v)


def emit_traces(results, format: str, path: str) -> None:
    """Write records as CSV (one header row, ``%.17g`` floats) or JSON.

    ``results`` is a RunResult or a list of them; several runs in one CSV are
    simply concatenated after a single header.
    """
    if isinstance(results, RunResult):
        results = [results]
    try:
        if format.lower() == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(RECORD_FIELDS)
                for res in results:
                    for r in res.records:
                        w.writerow([_fmt(getattr(r, k)) for k in RECORD_FIELDS])
        elif format.lower() == "json":
            with open(path, "w") as fh:
                payload = [res.to_dict() for res in results]
                json.dump(payload[0] if len(payload) == 1 else payload, fh)
        else:
            raise ValueError(f"unknown trace format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write traces to {path}: {exc}") from exc


def read_csv_traces(path: str) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_outputs(cfg: ExperimentConfig, out: ExperimentOutput) -> list:
    """One trace file per run plus ``summary.json``; returns the written paths."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    paths = []
    for row in out.rows:
        if row.result is None:
            continue
        name = f"{row.label}_rep{row.repetition}.{cfg.format}".replace("/", "_")
        p = os.path.join(cfg.output_dir, name)
        emit_traces(row.result, cfg.format, p)
        paths.append(p)
    summary_path = os.path.join(cfg.output_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump({"summary": out.summary, "meta": out.meta,
                   "failures": [{"label": r.label, "repetition": r.repetition, "error": r.error}
                                for r in out.rows if r.result is None]}, fh, indent=2)
    paths.append(summary_path)
    return paths


__all__ = [
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "UnknownRecipe",
    "emit_traces",
    "generate_dataset",
    "is_diverged",
    "parse_config",
    "run_experiment",
]
