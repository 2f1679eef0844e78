"""Shared data model: points, problem bundles, solver configuration and run records.

Points are plain float64 numpy arrays.  Vectors are 1-D, matrix iterates are
2-D (row-major, C order); ``x.shape`` carries the dimension metadata.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np


class BregFWError(Exception):
    """Base class for all library errors."""


class DomainMismatch(BregFWError):
    """The feasible region is not contained in the kernel domain."""


class DomainViolation(BregFWError):
    """A point lies outside the domain where a function (or its gradient) is defined."""


class ShapeMismatch(BregFWError):
    pass


class InvalidConstant(BregFWError):
    pass


class LineSearchDiverged(BregFWError):
    pass


class NoValidNu(BregFWError):
    pass


class Unsupported(BregFWError):
    pass


class TooLarge(BregFWError):
    pass


class InfeasibleStart(BregFWError):
    pass


class KernelMismatch(BregFWError):
    pass


class UnsupportedRegion(BregFWError):
    pass


class DegenerateSeries(BregFWError):
    pass


class UnknownKind(BregFWError):
    pass


def as_point(x, shape=None) -> np.ndarray:
    """Convert ``x`` to a float64 point, optionally reshaped, rejecting NaN/Inf."""
    arr = np.array(x, dtype=np.float64)
    if shape is not None:
        shape = tuple(shape)
        if math.prod(shape) != arr.size:
            raise ShapeMismatch(f"cannot view {arr.size} entries as shape {shape}")
        arr = arr.reshape(shape)
    if arr.ndim not in (1, 2):
        raise ShapeMismatch(f"points must be vectors or matrices, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DomainViolation("point has non-finite entries")
    return arr


def inner(x: np.ndarray, y: np.ndarray) -> float:
    """Frobenius/Euclidean inner product of two points of equal shape."""
    if x.shape != y.shape:
        raise ShapeMismatch(f"shape {x.shape} vs {y.shape}")
    return float(np.dot(x.ravel(), y.ravel()))


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``a*x + y`` as a new point."""
    if x.shape != y.shape:
        raise ShapeMismatch(f"shape {x.shape} vs {y.shape}")
    return a * x + y


@dataclass(frozen=True)
class TheoryConstants:
    """Optional problem constants used only by bound checks and short steps.

    ``smad_L`` is the relative smoothness constant, ``nu`` the scaling
    exponent of the kernel, ``heb_mu``/``heb_q`` the Hölder error bound
    constants, ``weak_rho`` the weak convexity modulus, ``interior_radius_r``
    the radius of a ball around the optimum contained in the region and
    ``pyramidal_width_delta`` the (user supplied) pyramidal width.
    """

    smad_L: Optional[float] = None
    nu: Optional[float] = None
    heb_mu: Optional[float] = None
    heb_q: Optional[float] = None
    weak_rho: Optional[float] = None
    interior_radius_r: Optional[float] = None
    pyramidal_width_delta: Optional[float] = None
    f_star: Optional[float] = None

    def __post_init__(self):
        def positive(name):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise InvalidConstant(f"{name} must be positive, got {val}")

        for name in ("smad_L", "heb_mu", "interior_radius_r", "pyramidal_width_delta"):
            positive(name)
        if self.nu is not None and not (0.0 < self.nu <= 1.0):
            raise InvalidConstant(f"nu must lie in (0, 1], got {self.nu}")
        if self.heb_q is not None and self.heb_q < 1.0:
            raise InvalidConstant(f"heb_q must be >= 1, got {self.heb_q}")
        if self.weak_rho is not None and self.weak_rho < 0:
            raise InvalidConstant(f"weak_rho must be nonnegative, got {self.weak_rho}")

    def merged(self, other: "TheoryConstants") -> "TheoryConstants":
        """Fill absent fields of ``self`` from ``other``."""
        vals = {k: (v if v is not None else getattr(other, k)) for k, v in asdict(self).items()}
        return TheoryConstants(**vals)


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 1000
    fw_gap_tolerance: float = 1e-7
    rng_seed: int = 0
    record_every: int = 1
    wall_clock_limit_seconds: Optional[float] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.fw_gap_tolerance < 0:
            raise ValueError("fw_gap_tolerance must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        if self.wall_clock_limit_seconds is not None and self.wall_clock_limit_seconds <= 0:
            raise ValueError("wall_clock_limit_seconds must be positive")


class StepKind(str, enum.Enum):
    FW = "FW"
    AWAY = "Away"
    DROP = "Drop"


class Termination(str, enum.Enum):
    GAP_TOLERANCE = "GapTolerance"
    MAX_ITERS = "MaxIters"
    WALL_CLOCK = "WallClock"
    LINE_SEARCH_DIVERGED = "LineSearchDiverged"


@dataclass(frozen=True)
class IterationRecord:
    """State at iterate ``t`` and the step taken from it.

    The terminal record (no step taken) has ``gamma == 0`` and
    ``inner_evals == 0``.  ``L_t``/``nu_t`` are NaN for rules that carry no
    smoothness estimate (open loop, mirror descent, ...).
    """

    t: int
    primal: float
    fw_gap: float
    gamma: float
    step_kind: StepKind
    L_t: float
    nu_t: float
    inner_evals: int
    elapsed_seconds: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["step_kind"] = self.step_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            t=int(d["t"]),
            primal=float(d["primal"]),
            fw_gap=float(d["fw_gap"]),
            gamma=float(d["gamma"]),
            step_kind=StepKind(d["step_kind"]),
            L_t=float(d["L_t"]),
            nu_t=float(d["nu_t"]),
            inner_evals=int(d["inner_evals"]),
            elapsed_seconds=float(d["elapsed_seconds"]),
        )


RECORD_FIELDS = (
    "t",
    "primal",
    "fw_gap",
    "gamma",
    "step_kind",
    "L_t",
    "nu_t",
    "inner_evals",
    "elapsed_seconds",
)


@dataclass(eq=False)
class RunResult:
    records: list
    final_x: np.ndarray
    termination: Termination
    total_inner_evals: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise ValueError("a run must have at least one record")

    @property
    def last(self) -> IterationRecord:
        return self.records[-1]

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "final_x": {"shape": list(self.final_x.shape), "data": self.final_x.ravel().tolist()},
            "termination": self.termination.value,
            "total_inner_evals": int(self.total_inner_evals),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        fx = d["final_x"]
        return cls(
            records=[IterationRecord.from_dict(r) for r in d["records"]],
            final_x=np.array(fx["data"], dtype=np.float64).reshape(fx["shape"]),
            termination=Termination(d["termination"]),
            total_inner_evals=int(d["total_inner_evals"]),
            info=dict(d.get("info", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    objective: Any
    kernel: Any
    region: Any
    constants: TheoryConstants = TheoryConstants()

    @property
    def shape(self):
        return self.region.shape


def make_problem(objective, kernel=None, region=None, constants: Optional[TheoryConstants] = None,
                 n_samples: int = 64, seed: int = 0) -> ProblemInstance:
    """Bundle and validate a problem.

    Vertices/extreme points of ``region`` are checked to have finite kernel
    value (closure of the kernel domain); random interior points are checked
    to have a finite kernel gradient.  ``kernel=None`` selects the objective's
    recommended kernel.
    """
    if region is None:
        raise ValueError("a feasible region is required")
    if kernel is None:
        kernel = objective.recommended_kernel()
    constants = constants or TheoryConstants()
    L, _ = objective.smad_constant()
    if L is not None and constants.smad_L is None:
        constants = TheoryConstants(**{**asdict(constants), "smad_L": L})

    rng = np.random.default_rng(seed)
    boundary = list(region.sample_boundary(rng, n_samples))
    interior = list(region.sample_interior(rng, n_samples))
    for x in boundary + interior:
        try:
            val = kernel.value(x)
        except DomainViolation as exc:
            raise DomainMismatch(f"feasible point outside kernel domain: {exc}") from exc
        if not math.isfinite(val):
            raise DomainMismatch(f"kernel {kernel.name} is infinite at a feasible point")
    for x in interior:
        try:
            g = kernel.gradient(x)
        except DomainViolation as exc:
            raise DomainMismatch(f"kernel gradient undefined at interior point: {exc}") from exc
        if not np.all(np.isfinite(g)):
            raise DomainMismatch(f"kernel {kernel.name} gradient is not finite at an interior point")
    return ProblemInstance(objective=objective, kernel=kernel, region=region, constants=constants)
