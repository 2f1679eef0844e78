"""Frank-Wolfe, away-step Frank-Wolfe and the two projection-type baselines."""

from __future__ import annotations

import math
import time
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    DomainViolation,
    InfeasibleStart,
    IterationRecord,
    KernelMismatch,
    LineSearchDiverged,
    RunResult,
    SolveConfig,
    StepKind,
    Termination,
    UnsupportedRegion,
    as_point,
    inner,
)
from .feasible import SimplexLeqOne
from .kernels import Entropy
from .stepsize import RuleKind, StepRuleSpec, advance, compute_step

DROP_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
RESYNC_TOL = 1e-12
GAMMA_MAX_CAP = 1e12


def fw_gap(problem, x):
    """(<grad f(x), x - v>, v) with v the LMO output at grad f(x)."""
    g = problem.objective.gradient(x)
    v = problem.region.lmo(g)
    return inner(g, x - v), v


def _start(problem, x0, needs_kernel):
    x = as_point(x0, problem.region.shape)
    if not problem.region.contains(x, 1e-9):
        raise InfeasibleStart("starting point is not feasible")
    if needs_kernel and problem.kernel.requires_interior:
        try:
            problem.kernel.gradient(x)
        except DomainViolation as exc:
            raise InfeasibleStart(f"starting point is not interior to the kernel domain: {exc}") from exc
    return x


def default_start(problem):
    """A feasible start: the region's LMO output at the all-ones direction."""
    return problem.region.lmo(np.ones(problem.region.shape))


class _Recorder:
    def __init__(self, config: SolveConfig):
        self.every = config.record_every
        self.records = []
        self.t0 = time.monotonic()

    def elapsed(self):
        return time.monotonic() - self.t0

    def step(self, t, fx, gap, outcome, kind, elapsed, gamma=None):
        if t % self.every == 0:
            self.records.append(IterationRecord(
                t=t, primal=fx, fw_gap=gap,
                gamma=outcome.gamma if gamma is None else gamma,
                step_kind=kind, L_t=outcome.L_star, nu_t=outcome.nu_star,
                inner_evals=outcome.inner_evals, elapsed_seconds=elapsed,
            ))

    def final(self, t, fx, gap, L, nu, elapsed):
        self.records.append(IterationRecord(
            t=t, primal=fx, fw_gap=gap, gamma=0.0, step_kind=StepKind.FW,
            L_t=L, nu_t=nu, inner_evals=0, elapsed_seconds=elapsed,
        ))


def _stop_reason(t, gap, elapsed, config):
    if gap <= config.fw_gap_tolerance:
        return Termination.GAP_TOLERANCE
    if t >= config.max_iters:
        return Termination.MAX_ITERS
    if config.wall_clock_limit_seconds is not None and elapsed >= config.wall_clock_limit_seconds:
        return Termination.WALL_CLOCK
    return None


def _finite(x):
    if not np.all(np.isfinite(x)):
        raise DomainViolation("iterate has non-finite entries")
    return x


def fw_run(problem, step_rule: StepRuleSpec, config: Optional[SolveConfig] = None, x0=None,
           callback: Optional[Callable] = None) -> RunResult:
    """Frank-Wolfe: x_{t+1} = (1 - gamma_t) x_t + gamma_t v_t with v_t from the LMO.

    Stops once the FW gap drops to ``config.fw_gap_tolerance``, after
    ``config.max_iters`` steps or at the wall-clock limit.  A step rule that
    fails to find an acceptable step ends the run with
    ``Termination.LINE_SEARCH_DIVERGED``.  ``callback(t, x_next, outcome)`` is
    invoked after every step.
    """
    config = config or SolveConfig()
    obj, region = problem.objective, problem.region
    x = _start(problem, default_start(problem) if x0 is None else x0, step_rule.uses_kernel)
    rec = _Recorder(config)
    L_prev = step_rule.L_init if step_rule.adaptive else (step_rule.L if step_rule.L is not None else math.nan)
    nu_last = math.nan
    total = 0
    t = 0
    while True:
        g = obj.gradient(x)
        fx = obj.value(x)
        v = region.lmo(g)
        gap = inner(g, x - v)
        elapsed = rec.elapsed()
        reason = _stop_reason(t, gap, elapsed, config)
        if reason is not None:
            break
        try:
            out = compute_step(step_rule, obj, problem.kernel, x, v, t=t, L_prev=L_prev, grad=g, fx=fx)
        except LineSearchDiverged:
            reason = Termination.LINE_SEARCH_DIVERGED
            break
        rec.step(t, fx, gap, out, StepKind.FW, elapsed)
        total += out.inner_evals
        if step_rule.adaptive:
            L_prev = out.L_star
        nu_last = out.nu_star
        x = _finite(advance(x, v, out.gamma))
        t += 1
        if callback is not None:
            callback(t, x, out)
    rec.final(t, fx, gap, L_prev, nu_last, elapsed)
    return RunResult(records=rec.records, final_x=x, termination=reason, total_inner_evals=total,
                     info={"solver": "fw", "rule": step_rule.kind.value, "iterations": t})


class ActiveSet:
    """Convex-combination bookkeeping: vertices with positive weights summing to one.

    Vertices are identified by their exact bit pattern (LMO outputs are
    deterministic, so a re-generated vertex collides with its earlier copy).
    """

    def __init__(self, vertex):
        self._atoms = {}
        self.add(np.array(vertex, dtype=float), 1.0)

    @staticmethod
    def key(v):
        return (v + 0.0).tobytes()

    def __len__(self):
        return len(self._atoms)

    def __contains__(self, v):
        return self.key(v) in self._atoms

    @property
    def vertices(self):
        return [a[0] for a in self._atoms.values()]

    @property
    def weights(self):
        return np.array([a[1] for a in self._atoms.values()])

    def weight(self, v):
        return self._atoms[self.key(v)][1]

    def add(self, v, w):
        """Add weight ``w`` to ``v``; returns True when ``v`` is a new atom."""
        k = self.key(v)
        if k in self._atoms:
            self._atoms[k][1] += w
            return False
        self._atoms[k] = [np.array(v, dtype=float), float(w)]
        return True

    def set_weight(self, v, w):
        self._atoms[self.key(v)][1] = float(w)

    def remove(self, v):
        del self._atoms[self.key(v)]

    def reset(self, v):
        self._atoms = {}
        self.add(np.array(v, dtype=float), 1.0)

    def scale(self, factor):
        for atom in self._atoms.values():
            atom[1] *= factor

    def renormalize(self):
        s = float(self.weights.sum())
        if abs(s - 1.0) > WEIGHT_SUM_TOL:
            for atom in self._atoms.values():
                atom[1] /= s

    def away_vertex(self, g):
        """argmax_{v in S} <g, v>, first atom on ties; returns (vertex, weight)."""
        best = None
        for v, w in self._atoms.values():
            val = inner(g, v)
            if best is None or val > best[0]:
                best = (val, v, w)
        return best[1], best[2]

    def iterate(self):
        it = iter(self._atoms.values())
        v, w = next(it)
        x = w * v
        for v, w in it:
            x = x + w * v
        return x


def afw_run(problem, step_rule: StepRuleSpec, config: Optional[SolveConfig] = None, x0=None,
            callback: Optional[Callable] = None) -> RunResult:
    """Away-step Frank-Wolfe over a polytope.

    ``x0`` must be a vertex (default: the LMO output at the all-ones
    direction).  Each iteration compares the FW gap with the away gap; ties go
    to the FW step.  Away steps are capped at lambda/(1 - lambda) and drop the
    away vertex when its weight reaches zero.  ``callback(t, x, active_set,
    kind)`` is invoked after every step.
    """
    if not problem.region.is_polytope:
        raise UnsupportedRegion(f"away steps need a polytope, got {problem.region.kind}")
    config = config or SolveConfig()
    obj, region = problem.objective, problem.region
    x = _start(problem, default_start(problem) if x0 is None else x0, step_rule.uses_kernel)
    S = ActiveSet(x)
    rec = _Recorder(config)
    L_prev = step_rule.L_init if step_rule.adaptive else (step_rule.L if step_rule.L is not None else math.nan)
    nu_last = math.nan
    total = adds = drops = singleton_away = 0
    t = 0
    while True:
        g = obj.gradient(x)
        fx = obj.value(x)
        v_fw = region.lmo(g)
        gap = inner(g, x - v_fw)
        elapsed = rec.elapsed()
        reason = _stop_reason(t, gap, elapsed, config)
        if reason is not None:
            break
        v_a, lam_a = S.away_vertex(g)
        away_gap = inner(g, v_a - x)
        fw_step = gap >= away_gap
        if not fw_step and len(S) == 1:
            singleton_away += 1
            fw_step = True
        if fw_step:
            v, d, gamma_max = v_fw, None, 1.0
        else:
            v, d = v_a, v_a - x
            gamma_max = min(lam_a / (1.0 - lam_a), GAMMA_MAX_CAP)
        try:
            out = compute_step(step_rule, obj, problem.kernel, x, v, t=t, L_prev=L_prev,
                               gamma_max=gamma_max, d=d, grad=g, fx=fx)
        except LineSearchDiverged:
            reason = Termination.LINE_SEARCH_DIVERGED
            break
        gamma = out.gamma
        x_new = advance(x, v, gamma, d)
        if fw_step:
            kind = StepKind.FW
            if gamma >= 1.0:
                adds += v_fw not in S
                S.reset(v_fw)
                x_new = v_fw.copy()
            elif gamma > 0.0:
                S.scale(1.0 - gamma)
                adds += S.add(v_fw, gamma)
        else:
            kind = StepKind.AWAY
            S.scale(1.0 + gamma)
            new_w = (1.0 + gamma) * lam_a - gamma
            if new_w <= DROP_TOL:
                S.remove(v_a)
                kind = StepKind.DROP
                drops += 1
            else:
                S.set_weight(v_a, new_w)
        S.renormalize()
        recon = S.iterate()
        if np.max(np.abs(x_new - recon)) > RESYNC_TOL * max(1.0, float(np.max(np.abs(recon)))):
            x_new = recon

        rec.step(t, fx, gap, out, kind, elapsed)
        total += out.inner_evals
        if step_rule.adaptive:
            L_prev = out.L_star
        nu_last = out.nu_star
        x = _finite(x_new)
        t += 1
        if callback is not None:
            callback(t, x, S, kind)
    rec.final(t, fx, gap, L_prev, nu_last, elapsed)
    info = {"solver": "afw", "rule": step_rule.kind.value, "iterations": t, "adds": adds,
            "drops": drops, "singleton_away": singleton_away, "active_set_size": len(S)}
    return RunResult(records=rec.records, final_x=x, termination=reason, total_inner_evals=total, info=info)


class _Fixed:
    def __init__(self, gamma, L, nu):
        self.gamma, self.L_star, self.nu_star, self.inner_evals = gamma, L, nu, 0


def _schedule(gamma_schedule, problem, what):
    if gamma_schedule is None:
        L = problem.constants.smad_L
        if L is None:
            raise ValueError(f"{what} needs a step size or a known smoothness constant")
        return lambda t: 1.0 / L
    if callable(gamma_schedule):
        return gamma_schedule
    val = float(gamma_schedule)
    if not val > 0:
        raise ValueError("step size must be positive")
    return lambda t: val


def mirror_descent_run(problem, gamma_schedule=None, config: Optional[SolveConfig] = None, x0=None) -> RunResult:
    """Entropic mirror descent on {x >= 0, sum x <= 1}.

    The multiplicative step y = x exp(-gamma g) is kept when sum(y) <= 1 and
    normalised onto sum = 1 otherwise, which is the exact KL projection onto
    the capped simplex.  ``gamma_schedule`` is a constant, a callable of t, or
    None for 1/L.
    """
    if not isinstance(problem.region, SimplexLeqOne):
        raise UnsupportedRegion("mirror descent is implemented for the capped simplex only")
    if not isinstance(problem.kernel, Entropy):
        raise KernelMismatch("mirror descent needs the entropy kernel")
    config = config or SolveConfig()
    step = _schedule(gamma_schedule, problem, "mirror descent")
    obj, region = problem.objective, problem.region
    x = _start(problem, np.full(region.shape, 1.0 / (region.n + 1)) if x0 is None else x0, True)
    rec = _Recorder(config)
    t = 0
    while True:
        g = obj.gradient(x)
        fx = obj.value(x)
        gap = inner(g, x - region.lmo(g))
        elapsed = rec.elapsed()
        reason = _stop_reason(t, gap, elapsed, config)
        if reason is not None:
            break
        gamma = step(t)
        rec.step(t, fx, gap, _Fixed(gamma, math.nan, math.nan), StepKind.FW, elapsed)
        z = np.log(x) - gamma * g
        lse = logsumexp(z)
        x = _finite(np.exp(z - lse) if lse > 0 else np.exp(z))
        t += 1
    rec.final(t, fx, gap, math.nan, math.nan, elapsed)
    return RunResult(records=rec.records, final_x=x, termination=reason, total_inner_evals=0,
                     info={"solver": "md", "iterations": t})


def projected_gradient_run(problem, step=None, config: Optional[SolveConfig] = None, x0=None) -> RunResult:
    """x_{t+1} = Proj_P(x_t - step * grad f(x_t)); ``step=None`` uses 1/L."""
    config = config or SolveConfig()
    region = problem.region
    region.project(np.zeros(region.shape))  # raises UnsupportedRegion early
    sched = _schedule(step, problem, "projected gradient")
    obj = problem.objective
    x = _start(problem, default_start(problem) if x0 is None else x0, False)
    rec = _Recorder(config)
    t = 0
    while True:
        g = obj.gradient(x)
        fx = obj.value(x)
        gap = inner(g, x - region.lmo(g))
        elapsed = rec.elapsed()
        reason = _stop_reason(t, gap, elapsed, config)
        if reason is not None:
            break
        s = sched(t)
        rec.step(t, fx, gap, _Fixed(s, math.nan, math.nan), StepKind.FW, elapsed)
        x = _finite(region.project(x - s * g))
        t += 1
    rec.final(t, fx, gap, math.nan, math.nan, elapsed)
    return RunResult(records=rec.records, final_x=x, termination=reason, total_inner_evals=0,
                     info={"solver": "pgd", "iterations": t})


SOLVERS = {
    "fw": fw_run,
    "afw": afw_run,
    "md": mirror_descent_run,
    "pgd": projected_gradient_run,
}

__all__ = [
    "ActiveSet",
    "RuleKind",
    "afw_run",
    "fw_gap",
    "fw_run",
    "mirror_descent_run",
    "projected_gradient_run",
]
