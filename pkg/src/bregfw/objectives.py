"""Experiment objectives with values, gradients, f-divergences and smad constants."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import kl_div

from .core import DomainViolation, ShapeMismatch, TheoryConstants, UnknownKind, inner
from . import kernels


class Objective:
    name = "objective"
    shape: tuple = ()

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def f_divergence(self, x_plus, x, fx=None, grad=None) -> float:
        """f(x+) - f(x) - <grad f(x), x+ - x>; may be negative, never clamped.

        ``fx``/``grad`` are the cached value and gradient at ``x``.  Subclasses
        with polynomial structure override this with a form that avoids the
        cancellation of the value difference when x+ is close to x.
        """
        if fx is None:
            fx = self.value(x)
        if grad is None:
            grad = self.gradient(x)
        return self.value(x_plus) - fx - inner(grad, x_plus - x)

    def smad_constant(self):
        """(L or None, recommended kernel id)."""
        return None, "euclidean"

    def recommended_kernel(self) -> kernels.Kernel:
        return kernels.make_kernel(self.smad_constant()[1], objective=self)

    def theory(self) -> TheoryConstants:
        return TheoryConstants()

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if self.shape and x.shape != self.shape:
            raise ShapeMismatch(f"{self.name}: expected shape {self.shape}, got {x.shape}")
        return x

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class Quadratic(Objective):
    """f(x) = 1/2 (x - c)^T Q (x - c) with Q symmetric positive semidefinite."""

    name = "quadratic"

    def __init__(self, Q, c=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ShapeMismatch("Q must be square")
        self.Q = 0.5 * (Q + Q.T)
        self.c = np.zeros(Q.shape[0]) if c is None else np.asarray(c, dtype=float)
        self.shape = (Q.shape[0],)

    def value(self, x):
        r = self._check(x) - self.c
        return 0.5 * float(r @ (self.Q @ r))

    def gradient(self, x):
        return self.Q @ (self._check(x) - self.c)

    def f_divergence(self, x_plus, x, fx=None, grad=None):
        d = self._check(x_plus) - self._check(x)
        return 0.5 * float(d @ (self.Q @ d))

    def smad_constant(self):
        return float(np.max(np.abs(np.linalg.eigvalsh(self.Q)))), "euclidean"

    def theory(self):
        eig = np.linalg.eigvalsh(self.Q)
        mu = float(eig[0])
        return TheoryConstants(smad_L=float(eig[-1]), nu=1.0,
                               heb_mu=mu if mu > 0 else None, heb_q=2.0 if mu > 0 else None)


class LpLoss(Objective):
    """f(x) = ||Ax - b||_p^p for p > 1."""

    name = "lp_loss"

    def __init__(self, A, b, p=1.1):
        if p <= 1:
            raise ValueError("p must exceed 1")
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.p = float(p)
        self.shape = (self.A.shape[1],)

    def value(self, x):
        r = self.A @ self._check(x) - self.b
        return float(np.sum(np.abs(r) ** self.p))

    def gradient(self, x):
        r = self.A @ self._check(x) - self.b
        # p |r|^(p-1) sign(r) has limit 0 at r = 0 for p > 1
        return self.A.T @ (self.p * np.sign(r) * np.abs(r) ** (self.p - 1.0))

    def smad_constant(self):
        return 1.0, "objective"


class PhaseRetrieval(Objective):
    """f(x) = 1/4 sum_i (<a_i, x>^2 - b_i)^2 with the a_i as rows of A."""

    name = "phase_retrieval"

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.shape = (self.A.shape[1],)

    def value(self, x):
        ax = self.A @ self._check(x)
        return 0.25 * float(np.sum((ax * ax - self.b) ** 2))

    def gradient(self, x):
        ax = self.A @ self._check(x)
        return self.A.T @ ((ax * ax - self.b) * ax)

    def f_divergence(self, x_plus, x, fx=None, grad=None):
        u = self.A @ self._check(x)
        delta = self.A @ (self._check(x_plus) - x)
        s = u * u - self.b
        e = 2.0 * u * delta + delta * delta
        return float(np.sum(0.5 * s * delta * delta + 0.25 * e * e))

    def smad_constant(self):
        sq = np.sum(self.A * self.A, axis=1)
        return float(np.sum(3.0 * sq**2 + sq * np.abs(self.b))), "quartic"

    def theory(self):
        sq = np.sum(self.A * self.A, axis=1)
        L, _ = self.smad_constant()
        return TheoryConstants(smad_L=L, weak_rho=float(np.sum(sq * np.abs(self.b))))


class KLInverse(Objective):
    """f(x) = KL(Ax, b) = sum_i (Ax)_i log((Ax)_i / b_i) + b_i - (Ax)_i, with A >= 0, b > 0."""

    name = "kl_inverse"

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if np.any(self.A < 0) or np.any(self.b <= 0):
            raise ValueError("KL inverse needs A >= 0 and b > 0")
        self.shape = (self.A.shape[1],)

    def value(self, x):
        ax = self.A @ self._check(x)
        if np.any(ax < 0):
            raise DomainViolation("KL objective needs Ax >= 0")
        return float(np.sum(kl_div(ax, self.b)))

    def gradient(self, x):
        ax = self.A @ self._check(x)
        if np.any(ax <= 0):
            raise DomainViolation("KL gradient undefined where (Ax)_i = 0")
        return self.A.T @ np.log(ax / self.b)

    def f_divergence(self, x_plus, x, fx=None, grad=None):
        # equals KL(A x+, A x)
        y = self.A @ self._check(x)
        if np.any(y <= 0):
            raise DomainViolation("KL gradient undefined where (Ax)_i = 0")
        y_plus = self.A @ self._check(x_plus)
        if np.any(y_plus < 0):
            raise DomainViolation("KL objective needs Ax >= 0")
        return float(np.sum(kl_div(y_plus, y)))

    def smad_constant(self):
        return float(np.max(self.A.sum(axis=0))), "entropy"

    def theory(self):
        return TheoryConstants(smad_L=self.smad_constant()[0])


class LowRank(Objective):
    """f(X) = 1/2 ||X X^T - M||_F^2 for X of shape (n, r) and symmetric M."""

    name = "low_rank"

    def __init__(self, M, r):
        M = np.asarray(M, dtype=float)
        self.M = 0.5 * (M + M.T)
        self.r = int(r)
        self.shape = (self.M.shape[0], self.r)

    def value(self, X):
        X = self._check(X)
        R = X @ X.T - self.M
        return 0.5 * float(np.sum(R * R))

    def gradient(self, X):
        X = self._check(X)
        return 2.0 * (X @ X.T - self.M) @ X

    def f_divergence(self, X_plus, X, fx=None, grad=None):
        X = self._check(X)
        D = self._check(X_plus) - X
        R = X @ X.T - self.M
        DD = D @ D.T
        E = X @ D.T + D @ X.T + DD
        return float(np.sum(R * DD) + 0.5 * np.sum(E * E))

    def smad_constant(self):
        return None, "quartic"


class NMF(Objective):
    """f(W, H) = 1/2 ||W H - V||_F^2.

    The point is the concatenation of W (m x r, row-major) and H (r x n,
    row-major) as one flat vector; ``split`` recovers the blocks.
    """

    name = "nmf"

    def __init__(self, V, r):
        self.V = np.asarray(V, dtype=float)
        self.m, self.n = self.V.shape
        self.r = int(r)
        self.shape = (self.m * self.r + self.r * self.n,)

    def split(self, x):
        x = self._check(x)
        k = self.m * self.r
        return x[:k].reshape(self.m, self.r), x[k:].reshape(self.r, self.n)

    def join(self, W, H):
        return np.concatenate([np.ravel(W), np.ravel(H)])

    def value(self, x):
        W, H = self.split(x)
        R = W @ H - self.V
        return 0.5 * float(np.sum(R * R))

    def gradient(self, x):
        W, H = self.split(x)
        R = W @ H - self.V
        return self.join(R @ H.T, W.T @ R)

    def f_divergence(self, x_plus, x, fx=None, grad=None):
        W, H = self.split(x)
        Wp, Hp = self.split(x_plus)
        dW, dH = Wp - W, Hp - H
        R = W @ H - self.V
        dWdH = dW @ dH
        E = W @ dH + dW @ H + dWdH
        return float(np.sum(R * dWdH) + 0.5 * np.sum(E * E))

    def smad_constant(self):
        return None, "quartic_scaled"

    def recommended_kernel(self):
        return kernels.QuarticScaled(c=float(np.linalg.norm(self.V)))


class ToyPiecewise(Objective):
    """-x^2 + 1 on (-1, -0.5), 3(x+1)^2 elsewhere.  Weakly convex (rho=2),
    quadratic growth with mu=6, minimum 0 at x = -1.

    At the two kinks the gradient of the outer branch is used.
    """

    name = "toy_piecewise"
    shape = (1,)

    @staticmethod
    def _inner(x0):
        return -1.0 < x0 < -0.5

    def value(self, x):
        x0 = float(self._check(x)[0])
        return -x0 * x0 + 1.0 if self._inner(x0) else 3.0 * (x0 + 1.0) ** 2

    def gradient(self, x):
        x0 = float(self._check(x)[0])
        return np.array([-2.0 * x0 if self._inner(x0) else 6.0 * (x0 + 1.0)])

    def smad_constant(self):
        return 6.0, "euclidean"

    def theory(self):
        return TheoryConstants(smad_L=6.0, nu=1.0, heb_mu=6.0, heb_q=2.0, weak_rho=2.0, f_star=0.0)


class ToyLog1pSq(Objective):
    """log(1 + x^2): 1/4-weakly convex, local quadratic growth with mu = 1/3.

    f'' ranges over [-1/4, 2], so 2 is a Euclidean smad constant.
    """

    name = "toy_log1p_sq"
    shape = (1,)

    def value(self, x):
        x0 = float(self._check(x)[0])
        return math.log1p(x0 * x0)

    def gradient(self, x):
        x0 = float(self._check(x)[0])
        return np.array([2.0 * x0 / (1.0 + x0 * x0)])

    def smad_constant(self):
        return 2.0, "euclidean"

    def theory(self):
        return TheoryConstants(smad_L=2.0, nu=1.0, heb_mu=1.0 / 3.0, heb_q=2.0, weak_rho=0.25, f_star=0.0)


TOYS = {"toy_piecewise": ToyPiecewise, "toy_log1p_sq": ToyLog1pSq}


def make_toy(kind: str) -> Objective:
    try:
        return TOYS[kind.lower()]()
    except KeyError:
        raise UnknownKind(f"unknown toy {kind!r}") from None


def value(objective, x):
    return objective.value(x)


def gradient(objective, x):
    return objective.gradient(x)


def f_divergence(objective, x_plus, x):
    return objective.f_divergence(np.asarray(x_plus, dtype=float), np.asarray(x, dtype=float))


def smad_constant(objective):
    return objective.smad_constant()
