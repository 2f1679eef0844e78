"""Frank-Wolfe methods with Bregman step sizes."""

from .core import (
    BregFWError,
    IterationRecord,
    ProblemInstance,
    RunResult,
    SolveConfig,
    StepKind,
    Termination,
    TheoryConstants,
    make_problem,
)
from .diagnostics import check_descent_lemma, fit_rate, gradient_fd_check, theorem_bound
from .feasible import Box, ExplicitPolytope, KSparsePolytope, L2Ball, NuclearNormBall, SimplexLeqOne
from .kernels import Burg, Entropy, Euclidean, Quartic, QuarticScaled, bregman_divergence, estimate_nu
from .solvers import afw_run, fw_gap, fw_run, mirror_descent_run, projected_gradient_run
from .stepsize import RuleKind, StepRuleSpec

__version__ = "0.1.0"
