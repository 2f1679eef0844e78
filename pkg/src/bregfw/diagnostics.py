"""Empirical checks: descent lemma, finite-difference gradients, rate fits and
closed-form convergence bounds."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DegenerateSeries, InvalidConstant, RunResult, UnknownKind, inner
from .stepsize import linesearch_budget_bound

log = logging.getLogger(__name__)


def check_descent_lemma(objective, kernel, L, region, n_pairs=1000, seed=0):
    """Count pairs violating |D_f(x, y)| <= L D_phi(x, y) on random interior pairs.

    The slack is 1e-9 (1 + |f(x)|).  Returns ``(violations, worst_ratio)``
    where ``worst_ratio`` is the largest observed |D_f| / D_phi, an empirical
    lower estimate of the smallest valid L.
    """
    if not L > 0:
        raise InvalidConstant("L must be positive")
    rng = np.random.default_rng(seed)
    xs = region.sample_interior(rng, n_pairs)
    ys = region.sample_interior(rng, n_pairs)
    violations = 0
    worst = 0.0
    for x, y in zip(xs, ys):
        fx = objective.value(x)
        df = fx - objective.value(y) - inner(objective.gradient(y), x - y)
        dphi = kernel.divergence(x, y)
        if abs(df) > L * dphi + 1e-9 * (1.0 + abs(fx)):
            violations += 1
        if dphi > 0:
            worst = max(worst, abs(df) / dphi)
    return violations, worst


def gradient_fd_check(objective, x, rel_tol: Optional[float] = None) -> float:
    """Max central-difference error of ``objective.gradient`` at ``x``.

    Steps are h_j = 1e-5 (1 + |x_j|); errors are scaled by max(||g||_inf, 1).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(objective.gradient(x), dtype=float).ravel()
    flat = x.ravel()
    fd = np.empty_like(flat)
    for j in range(flat.size):
        h = 1e-5 * (1.0 + abs(flat[j]))
        xp = flat.copy()
        xm = flat.copy()
        xp[j] += h
        xm[j] -= h
        fd[j] = (objective.value(xp.reshape(x.shape)) - objective.value(xm.reshape(x.shape))) / (2.0 * h)
    err = float(np.max(np.abs(fd - g)) / max(float(np.max(np.abs(g))), 1.0))
    if rel_tol is not None and err > rel_tol:
        log.warning("gradient check for %s: error %.3e exceeds %.1e", objective.name, err, rel_tol)
    return err


class RateModel(str, enum.Enum):
    POWER_LAW = "PowerLaw"
    GEOMETRIC = "Geometric"


@dataclass(frozen=True)
class RateFit:
    model: RateModel
    exponent_or_ratio: float
    r_squared: float
    window: tuple


def _linfit(u, y):
    A = np.column_stack([u, np.ones_like(u)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(y * y))):
        r2 = 1.0 if ss_res <= 1e-30 * max(1.0, float(np.sum(y * y))) else 0.0
    else:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    return float(coef[0]), r2


def fit_rate(records, gap_field: str = "fw_gap", window=None, fstar: Optional[float] = None) -> RateFit:
    """Classify a gap series as power law (log gap vs log t) or geometric (log gap vs t).

    ``records`` is a RunResult or a list of IterationRecords.  ``gap_field``
    is ``"fw_gap"`` or ``"primal"``; for the latter ``fstar`` is subtracted.
    ``window=(t_start, t_end)`` is inclusive; the default keeps the last half
    of the records.  Non-positive gaps in the window are skipped.  The model
    with the larger r^2 wins, ties going to the power law.
    """
    if isinstance(records, RunResult):
        records = records.records
    t = np.array([r.t for r in records], dtype=float)
    y = np.array([getattr(r, gap_field) for r in records], dtype=float)
    if gap_field == "primal" and fstar is not None:
        y = y - fstar
    if window is None:
        lo = len(records) // 2
        window = (int(t[lo]) if len(t) else 0, int(t[-1]) if len(t) else 0)
    mask = (t >= window[0]) & (t <= window[1]) & np.isfinite(y) & (y > 0)
    if mask.sum() < 5:
        raise DegenerateSeries(f"only {int(mask.sum())} usable points in window {window}")
    tw, ly = t[mask], np.log(y[mask])

    fits = []
    pos = tw > 0
    if pos.sum() >= 5:
        slope, r2 = _linfit(np.log(tw[pos]), ly[pos])
        fits.append((r2, 1, RateModel.POWER_LAW, slope))
    slope, r2 = _linfit(tw, ly)
    fits.append((r2, 0, RateModel.GEOMETRIC, math.exp(slope)))
    r2, _, model, value = max(fits, key=lambda f: (f[0], f[1]))
    return RateFit(model=model, exponent_or_ratio=value, r_squared=r2, window=(int(window[0]), int(window[1])))


def _positive(params, *names):
    for name in names:
        if name not in params:
            raise InvalidConstant(f"missing parameter {name!r}")
        if not params[name] > 0:
            raise InvalidConstant(f"{name} must be positive, got {params[name]}")


def _nu(params):
    nu = params.get("nu", 1.0)
    if not 0 < nu <= 1:
        raise InvalidConstant(f"nu must lie in (0, 1], got {nu}")
    return nu


def theorem_bound(kind: str, **params) -> float:
    """Closed-form convergence bounds.

    ``sublinear_convex``   2^(1+nu) L D2 / (t+2)^nu
    ``nonconvex_global``   2 max(h0, L D2) / (T+1)^(nu/(1+nu))
    ``local_sublinear``    2^(1+nu) mu L D2 / (rho (t+2)^nu)
    ``linesearch_budget``  bound on cumulative sufficient-decrease evaluations
    """
    nu = _nu(params)
    if kind == "sublinear_convex":
        _positive(params, "L", "D2")
        return 2.0 ** (1 + nu) * params["L"] * params["D2"] / (params["t"] + 2.0) ** nu
    if kind == "nonconvex_global":
        _positive(params, "L", "D2")
        h0 = params["h0"]
        if h0 < 0:
            raise InvalidConstant("h0 must be nonnegative")
        return 2.0 * max(h0, params["L"] * params["D2"]) / (params["T"] + 1.0) ** (nu / (1.0 + nu))
    if kind == "local_sublinear":
        _positive(params, "L", "D2", "mu", "rho")
        return 2.0 ** (1 + nu) * params["mu"] * params["L"] * params["D2"] / (params["rho"] * (params["t"] + 2.0) ** nu)
    if kind == "linesearch_budget":
        _positive(params, "L", "L_init", "eta", "tau", "beta")
        return linesearch_budget_bound(params["t"], params["eta"], params["tau"], params["beta"], nu,
                                       params["L"], params["L_init"])
    raise UnknownKind(f"unknown bound {kind!r}")


@dataclass(frozen=True)
class BoundVerdict:
    kind: str
    checked: int
    violations: int
    violations_safety: int
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def passed_safety(self) -> bool:
        return self.violations_safety == 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "checked": self.checked, "violations": self.violations,
                "violations_safety": self.violations_safety, "worst_ratio": self.worst_ratio,
                "passed": self.passed, "passed_safety": self.passed_safety}


def check_bound(result, kind: str, fstar: Optional[float] = None, slack: float = 1e-12,
                safety: float = 2.0, **params) -> BoundVerdict:
    """Compare a run against ``theorem_bound(kind, ...)``.

    Rate bounds (``sublinear_convex``, ``local_sublinear``) compare f(x_t) - f*
    at every record, skipping ``t < t_min`` (default 0).  ``nonconvex_global``
    compares the best FW gap of the run with the bound at the run's horizon T.
    The safety verdict repeats the check with D2 multiplied by ``safety``,
    which covers a sampled under-estimate of the diameter.
    """
    records = result.records if isinstance(result, RunResult) else result
    t_min = params.pop("t_min", 0)
    worst = 0.0
    bad = bad_safe = checked = 0
    if kind == "nonconvex_global":
        T = params.pop("T", records[-1].t)
        best = min(r.fw_gap for r in records if r.t <= T)
        pairs = [(best, dict(params, T=T))]
    elif kind in ("sublinear_convex", "local_sublinear"):
        if fstar is None:
            raise InvalidConstant("rate bounds need f*")
        pairs = [(r.primal - fstar, dict(params, t=r.t)) for r in records if r.t >= t_min]
    else:
        raise UnknownKind(f"no run check for bound {kind!r}")
    for value, p in pairs:
        b = theorem_bound(kind, **p)
        b_safe = theorem_bound(kind, **dict(p, D2=safety * p["D2"]))
        checked += 1
        bad += value > b + slack
        bad_safe += value > b_safe + slack
        if b > 0:
            worst = max(worst, value / b)
    return BoundVerdict(kind=kind, checked=checked, violations=int(bad), violations_safety=int(bad_safe),
                        worst_ratio=worst)


@dataclass(frozen=True)
class BudgetAudit:
    checked: int
    violations: int
    per_iteration: float
    worst_margin: float  # min over prefixes of bound - cumulative evaluations

    @property
    def passed(self) -> bool:
        return self.violations == 0


def audit_linesearch_budget(result: RunResult, spec) -> BudgetAudit:
    """Check cumulative inner evaluations against the line-search budget at every prefix.

    Each prefix ending at record t uses that record's L_t and the smallest
    nu_t accepted so far.  Needs ``record_every == 1`` for per-prefix checks;
    otherwise only recorded prefixes are checked.
    """
    steps = [r for r in result.records if r.inner_evals > 0]
    cum = 0
    nu_min = 1.0
    bad = 0
    margin = math.inf
    for r in steps:
        cum += r.inner_evals
        nu_min = min(nu_min, r.nu_t)
        bound = linesearch_budget_bound(r.t, spec.eta, spec.tau, spec.beta, nu_min, r.L_t, spec.L_init)
        margin = min(margin, bound - cum)
        bad += cum > bound
    per_iter = result.total_inner_evals / max(result.info.get("iterations", len(steps)), 1)
    return BudgetAudit(checked=len(steps), violations=int(bad), per_iteration=per_iter, worst_margin=margin)
