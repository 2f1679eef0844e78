"""Kernel generating distances, their Bregman divergences and the scaling exponent."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import kl_div

from .core import DomainViolation, NoValidNu, UnknownKind, inner

ALL_REALS = "AllReals"
NONNEGATIVE = "NonnegativeOrthant"
POSITIVE = "PositiveOrthant"

# relative threshold below which a negative divergence is rounding noise
_CLAMP = 1e-12

NU_GRID = tuple(round(1.0 - 0.05 * k, 2) for k in range(20))


def _clamp(div: float, phi_x: float) -> float:
    if div < 0.0 and div >= -_CLAMP * (1.0 + abs(phi_x)):
        return 0.0
    return div


class Kernel:
    """Base class.  Subclasses define ``value``, ``gradient`` and may override
    ``divergence`` with a numerically better closed form."""

    name = "kernel"
    domain = ALL_REALS

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        px = self.value(x)
        if math.isinf(px):
            return math.inf
        div = px - self.value(y) - inner(self.gradient(y), x - y)
        return _clamp(div, px)

    @property
    def requires_interior(self) -> bool:
        return self.domain != ALL_REALS

    def __repr__(self):
        return f"{type(self).__name__}()"


class Euclidean(Kernel):
    name = "euclidean"

    def value(self, x):
        return 0.5 * float(np.dot(x.ravel(), x.ravel()))

    def gradient(self, x):
        return np.array(x, dtype=float)

    def divergence(self, x, y):
        d = (x - y).ravel()
        return 0.5 * float(np.dot(d, d))


class Entropy(Kernel):
    """Boltzmann-Shannon entropy, sum x log x with 0 log 0 = 0."""

    name = "entropy"
    domain = NONNEGATIVE

    def _check(self, x):
        if np.any(x < 0):
            raise DomainViolation("entropy kernel needs nonnegative coordinates")

    def value(self, x):
        self._check(x)
        xs = x.ravel()
        pos = xs > 0
        return float(np.sum(xs[pos] * np.log(xs[pos])))

    def gradient(self, x):
        if np.any(x <= 0):
            raise DomainViolation("entropy gradient undefined at a zero coordinate")
        return np.log(x) + 1.0

    def divergence(self, x, y):
        self._check(x)
        if np.any(y <= 0):
            raise DomainViolation("entropy divergence needs an interior second argument")
        return float(np.sum(kl_div(x, y)))


class Burg(Kernel):
    """Burg entropy -sum log x; +inf on the boundary of the orthant."""

    name = "burg"
    domain = POSITIVE

    def value(self, x):
        if np.any(x < 0):
            raise DomainViolation("Burg kernel needs nonnegative coordinates")
        if np.any(x == 0):
            return math.inf
        return -float(np.sum(np.log(x)))

    def gradient(self, x):
        if np.any(x <= 0):
            raise DomainViolation("Burg gradient undefined outside the open orthant")
        return -1.0 / x

    def divergence(self, x, y):
        if np.any(x < 0):
            raise DomainViolation("Burg kernel needs nonnegative coordinates")
        if np.any(y <= 0):
            raise DomainViolation("Burg divergence needs an interior second argument")
        if np.any(x == 0):
            return math.inf
        r = (x / y).ravel()
        return float(np.sum(r - np.log(r) - 1.0))


@dataclass(frozen=True, repr=True)
class Quartic(Kernel):
    """``a*||x||^4 + (c/2)*||x||^2``; the default weights give 1/4 ||x||^4 + 1/2 ||x||^2.

    For a pair of matrix blocks (W, H) stored as one concatenated point,
    ``||x||^2 = ||W||_F^2 + ||H||_F^2`` so the same class covers the scaled
    NMF kernel.
    """

    quartic_coef: float = 0.25
    quad_coef: float = 1.0
    name = "quartic"

    def value(self, x):
        s = float(np.dot(x.ravel(), x.ravel()))
        return self.quartic_coef * s * s + 0.5 * self.quad_coef * s

    def gradient(self, x):
        s = float(np.dot(x.ravel(), x.ravel()))
        return (4.0 * self.quartic_coef * s + self.quad_coef) * x

    def divergence(self, x, y):
        # expanded around d = x - y so the result carries a factor ||d||^2 and
        # no cancellation happens near x == y
        d = (x - y).ravel()
        yv = y.ravel()
        dd = float(np.dot(d, d))
        e = float(np.dot(yv, d))
        sy = float(np.dot(yv, yv))
        quartic = dd * (2.0 * sy + 4.0 * e + dd) + 4.0 * e * e
        return max(self.quartic_coef * quartic + 0.5 * self.quad_coef * dd, 0.0)


class QuarticScaled(Quartic):
    """The (W, H) kernel ``3/4 (||W||^2+||H||^2)^2 + c/2 (||W||^2+||H||^2)``."""

    name = "quartic_scaled"

    def __init__(self, c: float = 1.0):
        super().__init__(quartic_coef=0.75, quad_coef=c)


class ObjectiveAsKernel(Kernel):
    """Use a convex objective itself as the kernel.

    Strict convexity is not checked; with a rank-deficient data matrix the
    generated distance can vanish for distinct points.
    """

    name = "objective"

    def __init__(self, objective):
        self.objective = objective

    def value(self, x):
        return self.objective.value(x)

    def gradient(self, x):
        return self.objective.gradient(x)

    def divergence(self, x, y):
        return _clamp(self.objective.f_divergence(x, y), self.objective.value(x))

    def __repr__(self):
        return f"ObjectiveAsKernel({self.objective!r})"


KERNELS = {
    "euclidean": Euclidean,
    "entropy": Entropy,
    "burg": Burg,
    "quartic": Quartic,
    "quartic_scaled": QuarticScaled,
}


def make_kernel(kind: str, objective=None, **params) -> Kernel:
    kind = kind.lower()
    if kind in ("objective", "objective_as_kernel"):
        if objective is None:
            raise ValueError("objective kernel needs the objective")
        return ObjectiveAsKernel(objective)
    try:
        cls = KERNELS[kind]
    except KeyError:
        raise UnknownKind(f"unknown kernel {kind!r}") from None
    return cls(**params)


def phi_value(kernel: Kernel, x) -> float:
    return kernel.value(np.asarray(x, dtype=float))


def bregman_divergence(kernel: Kernel, x, y) -> float:
    """D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>."""
    return kernel.divergence(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


@dataclass(frozen=True)
class NuEstimate:
    nu_hat: float
    worst_pair: tuple  # (x, y, gamma) with the smallest sample-wise exponent


def estimate_nu(kernel: Kernel, region, n_pairs: int = 1000,
                gamma_grid=(0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99),
                seed: int = 0, abs_tol: float = 1e-12) -> NuEstimate:
    """Largest nu on the grid 1.0, 0.95, ..., 0.05 with

        D((1-g)x + g y, x) <= g**(1+nu) * D(y, x) + abs_tol

    over random interior pairs (x, y) of ``region`` and every g in
    ``gamma_grid``.  This is a sample-based upper bound on the usable exponent.
    """
    gammas = np.asarray(gamma_grid, dtype=float)
    if np.any((gammas <= 0) | (gammas >= 1)):
        raise ValueError("gamma_grid must lie strictly inside (0, 1)")
    rng = np.random.default_rng(seed)
    xs = region.sample_interior(rng, n_pairs)
    ys = region.sample_interior(rng, n_pairs)

    lhs = np.empty((n_pairs, gammas.size))
    rhs = np.empty(n_pairs)
    for i in range(n_pairs):
        x, y = xs[i], ys[i]
        rhs[i] = kernel.divergence(y, x)
        for j, g in enumerate(gammas):
            lhs[i, j] = kernel.divergence((1.0 - g) * x + g * y, x)

    nu_hat: Optional[float] = None
    for nu in NU_GRID:
        bound = np.power(gammas[None, :], 1.0 + nu) * rhs[:, None] + abs_tol
        if np.all(lhs <= bound):
            nu_hat = nu
            break
    if nu_hat is None:
        raise NoValidNu(f"no grid exponent >= 0.05 satisfies the scaling inequality for {kernel.name}")

    # sample-wise exponent log(lhs/rhs)/log(g) - 1; the smallest is binding
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = lhs / rhs[:, None]
        expo = np.log(ratio) / np.log(gammas)[None, :] - 1.0
    expo = np.where(np.isfinite(expo), expo, np.inf)
    i, j = np.unravel_index(int(np.argmin(expo)), expo.shape)
    return NuEstimate(nu_hat=nu_hat, worst_pair=(xs[i], ys[i], float(gammas[j])))
