"""Step-size rules for Frank-Wolfe type updates.

All rules produce a :class:`StepOutcome`.  The adaptive Bregman rule warm
starts its smoothness estimate from the previous iteration and searches the
scaling exponent from 1 downwards at every call.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DomainViolation, InvalidConstant, LineSearchDiverged, inner

# relative slack on the kernel scaling check; rounding in D(x+, x) otherwise
# makes the exact quadratic case look like a violation
_SCALING_RTOL = 1e-10
_LOG_DOMAIN_BELOW = 0.3


class RuleKind(str, enum.Enum):
    BREGMAN_SHORT = "bregman_short"
    ADAPTIVE_BREGMAN = "adaptive_bregman"
    OPEN_LOOP = "open_loop"
    FIXED_NONCONVEX = "fixed_nonconvex"
    EUCLIDEAN_ADAPTIVE = "euclidean_adaptive"
    EUCLIDEAN_SHORT = "euclidean_short"


@dataclass(frozen=True)
class StepRuleSpec:
    kind: RuleKind = RuleKind.ADAPTIVE_BREGMAN
    L: Optional[float] = None
    nu: Optional[float] = None
    beta: float = 0.9
    eta: float = 0.9
    tau: float = 2.0
    L_init: float = 1.0
    kappa_min: float = 0.05
    horizon: Optional[int] = None
    strict_alg2: bool = False
    max_inner: int = 200
    open_loop_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if not 0 < self.beta < 1:
            raise InvalidConstant("beta must lie in (0, 1)")
        if not 0 < self.eta <= 1:
            raise InvalidConstant("eta must lie in (0, 1]")
        if not self.tau > 1:
            raise InvalidConstant("tau must exceed 1")
        if not self.L_init > 0:
            raise InvalidConstant("L_init must be positive")
        if not 0 < self.kappa_min <= 1:
            raise InvalidConstant("kappa_min must lie in (0, 1]")
        if self.kind in (RuleKind.BREGMAN_SHORT, RuleKind.EUCLIDEAN_SHORT) and self.L is None:
            raise InvalidConstant(f"{self.kind.value} needs a smoothness constant L")
        if self.kind is RuleKind.BREGMAN_SHORT and self.nu is None:
            raise InvalidConstant("bregman_short needs the scaling exponent nu")
        if self.kind is RuleKind.FIXED_NONCONVEX and self.horizon is None:
            raise InvalidConstant("fixed_nonconvex needs the horizon T")
        if self.L is not None and not self.L > 0:
            raise InvalidConstant("L must be positive")
        if self.open_loop_offset < 0:
            raise InvalidConstant("open_loop_offset must be nonnegative")
        if self.nu is not None and not 0 < self.nu <= 1:
            raise InvalidConstant("nu must lie in (0, 1]")

    @property
    def adaptive(self) -> bool:
        return self.kind in (RuleKind.ADAPTIVE_BREGMAN, RuleKind.EUCLIDEAN_ADAPTIVE)

    @property
    def uses_kernel(self) -> bool:
        return self.kind in (RuleKind.ADAPTIVE_BREGMAN, RuleKind.BREGMAN_SHORT)


@dataclass(frozen=True)
class StepOutcome:
    gamma: float
    L_star: float
    nu_star: float
    inner_evals: int
    accepted: bool = True


def advance(x, v, gamma, d=None):
    """Next iterate: (1-gamma) x + gamma v, or x - gamma d for an explicit direction."""
    if d is None:
        return (1.0 - gamma) * x + gamma * v
    return x - gamma * d


def _short_gamma(gap, M, kappa, div, gamma_max):
    if gap <= 0.0:
        return 0.0
    if div == 0.0:
        return gamma_max
    base = gap / (M * (1.0 + kappa) * div)
    if base == 0.0:
        return 0.0
    if kappa < _LOG_DOMAIN_BELOW:
        lg = math.log(base) / kappa
        if gamma_max > 0 and lg >= math.log(gamma_max):
            return gamma_max
        return math.exp(lg)
    try:
        gamma = base ** (1.0 / kappa)
    except OverflowError:
        return gamma_max
    return min(gamma, gamma_max)


def bregman_short_gamma(L, nu, gap, div, gamma_max=1.0) -> float:
    """min{(gap / (L (1+nu) div))^(1/nu), gamma_max}."""
    if not L > 0:
        raise InvalidConstant(f"L must be positive, got {L}")
    if not 0 < nu <= 1:
        raise InvalidConstant(f"nu must lie in (0, 1], got {nu}")
    return _short_gamma(gap, L, nu, div, gamma_max)


def open_loop_gamma(t: int, offset: int = 0) -> float:
    """2 / (2 + t + offset); a positive offset avoids the full first step."""
    return 2.0 / (2.0 + t + offset)


def fixed_nonconvex_gamma(T: int, nu: float = 1.0) -> float:
    return 1.0 / (T + 1.0) ** (1.0 / (1.0 + nu))


def linesearch_budget_bound(t, eta, tau, beta, nu, L, L_init) -> float:
    """Upper bound on the number of sufficient-decrease evaluations up to iteration t."""
    first = (1.0 - math.log(eta) / math.log(tau)) * (t + 1) + max(math.log(tau * L / L_init), 0.0) / math.log(tau)
    second = (1.0 + math.log(nu) / math.log(beta)) * (t + 1)
    return max(first, second)


def _prepare(objective, x, v, d, grad, fx):
    if grad is None:
        grad = objective.gradient(x)
    if fx is None:
        fx = objective.value(x)
    direction = x - v if d is None else d
    gap = inner(grad, direction)
    if not gap > 0:
        raise ValueError(f"step requested along a non-descent direction (gap={gap})")
    return grad, fx, gap


def adaptive_bregman_step(objective, kernel, x, v, L_prev, gamma_max=1.0, spec: Optional[StepRuleSpec] = None,
                          *, d=None, grad=None, fx=None) -> StepOutcome:
    """Adaptive search for (L, nu, gamma) with the Bregman sufficient-decrease test.

    ``d`` is the step direction with x+ = x - gamma d (defaults to x - v);
    the reference distance is always D_phi(v, x).  ``grad``/``fx`` may be
    passed to avoid recomputation.
    """
    spec = spec or StepRuleSpec()
    grad, fx, gap = _prepare(objective, x, v, d, grad, fx)
    div = kernel.divergence(v, x)
    if not math.isfinite(div):
        raise DomainViolation("infinite reference divergence; the iterate left the kernel interior")

    M = spec.eta * L_prev
    kappa = 1.0
    evals = 0
    floor_hits = 0
    while True:
        if evals >= spec.max_inner:
            raise LineSearchDiverged(f"no acceptance after {evals} evaluations (M={M:.3e}, kappa={kappa:.3g})")
        gamma = _short_gamma(gap, M, kappa, div, gamma_max)
        x_plus = advance(x, v, gamma, d)
        evals += 1
        lhs = objective.f_divergence(x_plus, x, fx=fx, grad=grad)
        scale = gamma ** (1.0 + kappa) * div
        if lhs <= M * scale:
            if floor_hits > 1:
                warnings.warn(f"scaling exponent held at its floor {spec.kappa_min} {floor_hits} times",
                              RuntimeWarning, stacklevel=2)
            return StepOutcome(gamma=gamma, L_star=M, nu_star=kappa, inner_evals=evals, accepted=True)
        M *= spec.tau
        if spec.strict_alg2 or kernel.divergence(x_plus, x) > scale * (1.0 + _SCALING_RTOL):
            kappa *= spec.beta
            if kappa < spec.kappa_min:
                kappa = spec.kappa_min
                floor_hits += 1


def euclidean_adaptive_step(objective, x, v, L_prev, gamma_max=1.0, spec: Optional[StepRuleSpec] = None,
                            *, d=None, grad=None, fx=None) -> StepOutcome:
    """Backtracking on the Euclidean quadratic upper model

        f(x+) <= f(x) - gamma <g, d> + gamma^2 M ||d||^2 / 2.
    """
    spec = spec or StepRuleSpec(kind=RuleKind.EUCLIDEAN_ADAPTIVE)
    grad, fx, gap = _prepare(objective, x, v, d, grad, fx)
    direction = x - v if d is None else d
    dd = float(np.dot(direction.ravel(), direction.ravel()))
    M = spec.eta * L_prev
    evals = 0
    while True:
        if evals >= spec.max_inner:
            raise LineSearchDiverged(f"no acceptance after {evals} evaluations (M={M:.3e})")
        gamma = gamma_max if dd == 0.0 else min(gap / (M * dd), gamma_max)
        x_plus = advance(x, v, gamma, d)
        evals += 1
        # f(x+) <= f(x) - gamma <g, d> + ... written as a bound on D_f(x+, x)
        if objective.f_divergence(x_plus, x, fx=fx, grad=grad) <= 0.5 * gamma * gamma * M * dd:
            return StepOutcome(gamma=gamma, L_star=M, nu_star=1.0, inner_evals=evals, accepted=True)
        M *= spec.tau


def compute_step(spec: StepRuleSpec, objective, kernel, x, v, *, t, L_prev, gamma_max=1.0,
                 d=None, grad=None, fx=None) -> StepOutcome:
    """Dispatch on the rule kind.  ``L_prev`` is ignored by non-adaptive rules."""
    kind = spec.kind
    nan = float("nan")
    if kind is RuleKind.ADAPTIVE_BREGMAN:
        return adaptive_bregman_step(objective, kernel, x, v, L_prev, gamma_max, spec, d=d, grad=grad, fx=fx)
    if kind is RuleKind.EUCLIDEAN_ADAPTIVE:
        return euclidean_adaptive_step(objective, x, v, L_prev, gamma_max, spec, d=d, grad=grad, fx=fx)
    if kind is RuleKind.OPEN_LOOP:
        return StepOutcome(min(open_loop_gamma(t, spec.open_loop_offset), gamma_max), nan, nan, 0)
    if kind is RuleKind.FIXED_NONCONVEX:
        nu = spec.nu if spec.nu is not None else 1.0
        return StepOutcome(min(fixed_nonconvex_gamma(spec.horizon, nu), gamma_max), nan, nan, 0)

    if grad is None:
        grad = objective.gradient(x)
    direction = x - v if d is None else d
    gap = inner(grad, direction)
    if kind is RuleKind.BREGMAN_SHORT:
        div = kernel.divergence(v, x)
        if not math.isfinite(div):
            raise DomainViolation("infinite reference divergence; the iterate left the kernel interior")
        return StepOutcome(bregman_short_gamma(spec.L, spec.nu, gap, div, gamma_max), spec.L, spec.nu, 0)
    if kind is RuleKind.EUCLIDEAN_SHORT:
        dd = float(np.dot(direction.ravel(), direction.ravel()))
        gamma = 0.0 if gap <= 0 else (gamma_max if dd == 0 else min(gap / (spec.L * dd), gamma_max))
        return StepOutcome(gamma, spec.L, 1.0, 0)
    raise ValueError(f"unhandled rule {kind}")
