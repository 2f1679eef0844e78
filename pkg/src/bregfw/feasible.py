"""Feasible regions with exact linear minimization oracles.

Every region exposes ``lmo``, ``contains``, random sampling (used by the
diagnostics) and, when finite, ``enumerate_vertices``.  Regions that admit a
cheap Euclidean projection also expose ``project``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from .core import ShapeMismatch, TooLarge, Unsupported, UnsupportedRegion

MAX_VERTICES = 10**6


class Region:
    kind = "region"
    is_polytope = False
    shape: tuple = ()

    def _check(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape != self.shape:
            raise ShapeMismatch(f"{self.kind}: expected shape {self.shape}, got {a.shape}")
        return a

    def lmo(self, a) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def vertex_count(self) -> int:
        raise Unsupported(f"{self.kind} has no finite vertex set")

    def enumerate_vertices(self) -> list:
        raise Unsupported(f"{self.kind} has no finite vertex set")

    def project(self, y) -> np.ndarray:
        raise UnsupportedRegion(f"no Euclidean projection for {self.kind}")

    def sample_boundary(self, rng, k: int) -> np.ndarray:
        """Extreme points from LMO calls on random directions, in antipodal pairs."""
        out = []
        while len(out) < k:
            a = rng.standard_normal(self.shape)
            out.append(self.lmo(a))
            if len(out) < k:
                out.append(self.lmo(-a))
        return np.array(out)

    def sample_interior(self, rng, k: int) -> np.ndarray:
        """Random strict convex combinations of extreme points."""
        m = min(int(np.prod(self.shape)) + 1, 12)
        out = []
        for _ in range(k):
            atoms = self.sample_boundary(rng, m)
            w = rng.dirichlet(np.ones(m))
            out.append(np.tensordot(w, atoms, axes=1))
        return np.array(out)

    def _cap(self, count):
        if count > MAX_VERTICES:
            raise TooLarge(f"{self.kind} has {count} vertices (cap {MAX_VERTICES})")


class SimplexLeqOne(Region):
    """{x >= 0, sum(x) <= 1}; vertices are the origin and the unit vectors."""

    kind = "simplex"
    is_polytope = True

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = int(n)
        self.shape = (self.n,)

    def lmo(self, a):
        a = self._check(a)
        v = np.zeros(self.n)
        j = int(np.argmin(a))
        if a[j] < 0:
            v[j] = 1.0
        return v

    def contains(self, x, tol=1e-9):
        x = self._check(x)
        return bool(np.all(x >= -tol) and x.sum() <= 1.0 + tol)

    def vertex_count(self):
        return self.n + 1

    def enumerate_vertices(self):
        self._cap(self.vertex_count())
        return [np.zeros(self.n)] + [np.eye(self.n)[j] for j in range(self.n)]

    def project(self, y):
        y = self._check(y)
        z = np.maximum(y, 0.0)
        if z.sum() <= 1.0:
            return z
        return project_probability_simplex(y)

    def sample_interior(self, rng, k):
        return rng.dirichlet(np.ones(self.n + 1), size=k)[:, : self.n]

    def __repr__(self):
        return f"SimplexLeqOne(n={self.n})"


def project_probability_simplex(y):
    """Euclidean projection onto {x >= 0, sum(x) = 1} by the sort-threshold rule."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


class L2Ball(Region):
    """{x : ||x||^2 <= b_max}; the radius is sqrt(b_max)."""

    kind = "l2ball"

    def __init__(self, n: int, b_max: float = 1.0):
        if b_max <= 0:
            raise ValueError("b_max must be positive")
        self.n = int(n)
        self.b_max = float(b_max)
        self.radius = math.sqrt(self.b_max)
        self.shape = (self.n,)

    def lmo(self, a):
        a = self._check(a)
        norm = np.linalg.norm(a)
        if norm == 0.0:
            v = np.zeros(self.n)
            v[0] = -self.radius
            return v
        return -self.radius * (a / norm)

    def contains(self, x, tol=1e-9):
        x = self._check(x)
        return bool(np.linalg.norm(x) <= self.radius + tol)

    def project(self, y):
        y = self._check(y)
        norm = np.linalg.norm(y)
        if norm <= self.radius:
            return y.copy()
        return y * (self.radius / norm)

    def sample_interior(self, rng, k):
        d = rng.standard_normal((k, self.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(k, 1)) ** (1.0 / self.n)
        return d * r * (1.0 - 1e-9)

    def __repr__(self):
        return f"L2Ball(n={self.n}, b_max={self.b_max})"


class Box(Region):
    kind = "box"
    is_polytope = True

    def __init__(self, lower, upper, shape=None):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            lower = np.broadcast_to(lower, shape).copy()
            upper = np.broadcast_to(upper, shape).copy()
        lower, upper = np.broadcast_arrays(lower, upper)
        if np.any(lower > upper):
            raise ValueError("box needs lower <= upper")
        self.lower = np.array(lower)
        self.upper = np.array(upper)
        self.shape = self.lower.shape

    def lmo(self, a):
        a = self._check(a)
        return np.where(a < 0, self.upper, self.lower)

    def contains(self, x, tol=1e-9):
        x = self._check(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def vertex_count(self):
        free = int(np.count_nonzero(self.lower != self.upper))
        return 2**free

    def enumerate_vertices(self):
        self._cap(self.vertex_count())
        lo, hi = self.lower.ravel(), self.upper.ravel()
        free = np.nonzero(lo != hi)[0]
        out = []
        for bits in itertools.product((0, 1), repeat=free.size):
            v = lo.copy()
            v[free[np.array(bits, dtype=bool)]] = hi[free[np.array(bits, dtype=bool)]]
            out.append(v.reshape(self.shape))
        return out

    def project(self, y):
        return np.clip(self._check(y), self.lower, self.upper)

    def sample_interior(self, rng, k):
        u = rng.uniform(size=(k,) + self.shape)
        return self.lower + (self.upper - self.lower) * u

    def __repr__(self):
        return f"Box(shape={self.shape})"


class KSparsePolytope(Region):
    """{x : ||x||_1 <= K, ||x||_inf <= 1} for integer 1 <= K <= n."""

    kind = "ksparse"
    is_polytope = True

    def __init__(self, n: int, K: int):
        if int(K) != K or not 1 <= K <= n:
            raise ValueError(f"K must be an integer in [1, n], got K={K}, n={n}")
        self.n = int(n)
        self.K = int(K)
        self.shape = (self.n,)

    def lmo(self, a):
        a = self._check(a)
        idx = np.argsort(-np.abs(a), kind="stable")[: self.K]
        v = np.zeros(self.n)
        v[idx] = np.where(a[idx] > 0, -1.0, 1.0)
        return v

    def contains(self, x, tol=1e-9):
        x = self._check(x)
        return bool(np.abs(x).sum() <= self.K + tol and np.all(np.abs(x) <= 1.0 + tol))

    def vertex_count(self):
        return math.comb(self.n, self.K) * 2**self.K

    def enumerate_vertices(self):
        self._cap(self.vertex_count())
        out = []
        for support in itertools.combinations(range(self.n), self.K):
            for signs in itertools.product((-1.0, 1.0), repeat=self.K):
                v = np.zeros(self.n)
                v[list(support)] = signs
                out.append(v)
        return out

    def __repr__(self):
        return f"KSparsePolytope(n={self.n}, K={self.K})"


def top_singular_pair(A, tol=1e-10, max_iter=5000, dense_below=64):
    """Leading singular triple (u, s, v) of a matrix.

    Full SVD when the smaller dimension is at most ``dense_below``, power
    iteration on A^T A otherwise.
    """
    if min(A.shape) <= dense_below:
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
        return U[:, 0], float(S[0]), Vt[0]
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    s = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        w /= nw
        done = np.linalg.norm(w - v) <= tol
        v = w
        if done:
            break
    u = A @ v
    s = float(np.linalg.norm(u))
    if s > 0:
        u /= s
    return u, s, v


class NuclearNormBall(Region):
    """{X : ||X||_* <= xi} for matrices of a fixed shape."""

    kind = "nuclear"

    def __init__(self, shape, xi: float):
        if len(shape) != 2:
            raise ValueError("nuclear norm ball needs a matrix shape")
        if xi <= 0:
            raise ValueError("xi must be positive")
        self.shape = (int(shape[0]), int(shape[1]))
        self.xi = float(xi)

    def lmo(self, a):
        a = self._check(a)
        u, s, v = top_singular_pair(a)
        if s == 0.0:
            out = np.zeros(self.shape)
            out[0, 0] = -self.xi
            return out
        return -self.xi * np.outer(u, v)

    def contains(self, x, tol=1e-9):
        x = self._check(x)
        return bool(np.linalg.svd(x, compute_uv=False).sum() <= self.xi + tol)

    def __repr__(self):
        return f"NuclearNormBall(shape={self.shape}, xi={self.xi})"


class ExplicitPolytope(Region):
    """Convex hull of an explicit vertex list (rows of ``vertices``)."""

    kind = "polytope"
    is_polytope = True

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim < 2 or V.shape[0] == 0:
            raise ValueError("need a nonempty list of vertices")
        _, keep = np.unique(V.reshape(V.shape[0], -1), axis=0, return_index=True)
        self.vertices = V[np.sort(keep)]
        self.shape = self.vertices.shape[1:]

    def lmo(self, a):
        a = self._check(a)
        vals = self.vertices.reshape(len(self.vertices), -1) @ a.ravel()
        return self.vertices[int(np.argmin(vals))].copy()

    def contains(self, x, tol=1e-9):
        x = self._check(x).ravel()
        V = self.vertices.reshape(len(self.vertices), -1)
        k = V.shape[0]
        # feasibility LP: x = V^T w, w >= 0, sum w = 1, with slack on the equalities
        A_eq = np.vstack([V.T, np.ones((1, k))])
        b_eq = np.concatenate([x, [1.0]])
        res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
        if res.status == 0:
            return True
        # fall back to a least-squares check for points within tol of the hull
        res = linprog(
            np.concatenate([np.zeros(k), np.ones(2 * A_eq.shape[0])]),
            A_eq=np.hstack([A_eq, np.eye(A_eq.shape[0]), -np.eye(A_eq.shape[0])]),
            b_eq=b_eq,
            bounds=[(0, None)] * (k + 2 * A_eq.shape[0]),
            method="highs",
        )
        return bool(res.status == 0 and res.fun <= tol)

    def vertex_count(self):
        return len(self.vertices)

    def enumerate_vertices(self):
        self._cap(self.vertex_count())
        return [v.copy() for v in self.vertices]

    def __repr__(self):
        return f"ExplicitPolytope({len(self.vertices)} vertices, shape={self.shape})"


def lmo(region: Region, a) -> np.ndarray:
    return region.lmo(a)


def contains(region: Region, x, tol: float = 1e-9) -> bool:
    return region.contains(x, tol)


def enumerate_vertices(region: Region) -> list:
    return region.enumerate_vertices()


def bregman_diameter_sq(region: Region, kernel, n_samples: int = 100, seed: int = 0) -> float:
    """Sampled lower estimate of sup_{x,y in P} D_phi(x, y).

    Candidates are the vertices (when there are at most ``20 * n_samples``)
    plus antipodal extreme points and interior samples.  Second arguments
    are restricted to points where the kernel gradient exists.
    """
    rng = np.random.default_rng(seed)
    cands = []
    try:
        if region.vertex_count() <= 20 * n_samples:
            cands.extend(region.enumerate_vertices())
    except Unsupported:
        pass
    cands.extend(region.sample_boundary(rng, n_samples))
    cands.extend(region.sample_interior(rng, n_samples))

    seconds = []
    for y in cands:
        if kernel.requires_interior:
            try:
                g = kernel.gradient(y)
            except Exception:
                continue
            if not np.all(np.isfinite(g)):
                continue
        seconds.append(y)
    best = 0.0
    for y in seconds:
        for x in cands:
            d = kernel.divergence(x, y)
            if d > best:
                best = d
    return float(best)

