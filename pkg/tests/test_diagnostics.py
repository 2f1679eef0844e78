import math

import numpy as np
import pytest

from bregfw import Box, Euclidean, SimplexLeqOne, StepRuleSpec
from bregfw.core import (DegenerateSeries, InvalidConstant, IterationRecord, RunResult, SolveConfig, StepKind,
                         Termination, UnknownKind, make_problem)
from bregfw.diagnostics import (RateModel, audit_linesearch_budget, check_bound, check_descent_lemma, fit_rate,
                                gradient_fd_check, theorem_bound)
from bregfw.objectives import Quadratic, ToyPiecewise
from bregfw.solvers import afw_run, fw_run
from bregfw.stepsize import linesearch_budget_bound


def _rec(t, primal=1.0, fw_gap=1.0, L=1.0, nu=1.0, inner=0):
    return IterationRecord(t=t, primal=primal, fw_gap=fw_gap, gamma=0.5, step_kind=StepKind.FW, L_t=L, nu_t=nu,
                           inner_evals=inner, elapsed_seconds=0.0)


def _run(records):
    return RunResult(records=records, final_x=np.zeros(1), termination=Termination.MAX_ITERS,
                     total_inner_evals=sum(r.inner_evals for r in records), info={"iterations": records[-1].t})


def test_descent_lemma_examples():
    q, k, box = Quadratic(np.eye(2)), Euclidean(), Box(-1, 1, shape=(2,))
    viol, worst = check_descent_lemma(q, k, 1.0, box, n_pairs=200)
    assert viol == 0 and worst == pytest.approx(1.0, rel=1e-9)
    viol, _ = check_descent_lemma(q, k, 0.5, box, n_pairs=200)
    assert viol > 0
    with pytest.raises(InvalidConstant):
        check_descent_lemma(q, k, 0.0, box)


def test_gradient_fd_check_examples():
    q = Quadratic(np.diag([1.0, 3.0]))
    assert gradient_fd_check(q, np.array([0.3, -0.7])) <= 1e-8

    class _Wrong(Quadratic):
        def gradient(self, x):
            return 2.0 * super().gradient(x)

    assert gradient_fd_check(_Wrong(np.eye(2)), np.array([1.0, 1.0])) == pytest.approx(0.5, rel=1e-6)


def test_fit_rate_power_law():
    fit = fit_rate([_rec(t, fw_gap=3.0 / t) for t in range(1, 201)])
    assert fit.model is RateModel.POWER_LAW
    assert fit.exponent_or_ratio == pytest.approx(-1.0, abs=0.01)


def test_fit_rate_geometric():
    fit = fit_rate([_rec(t, fw_gap=2.0 * 0.9**t) for t in range(200)])
    assert fit.model is RateModel.GEOMETRIC
    assert fit.exponent_or_ratio == pytest.approx(0.9, abs=0.005)


def test_fit_rate_constant_series_has_zero_exponent():
    fit = fit_rate([_rec(t, fw_gap=0.7) for t in range(1, 50)])
    assert fit.model is RateModel.POWER_LAW
    assert abs(fit.exponent_or_ratio) < 1e-12


def test_fit_rate_primal_subtracts_fstar_and_window():
    recs = [_rec(t, primal=5.0 + 1.0 / t**2) for t in range(1, 101)]
    fit = fit_rate(recs, gap_field="primal", fstar=5.0, window=(10, 100))
    assert fit.model is RateModel.POWER_LAW and fit.window == (10, 100)
    assert fit.exponent_or_ratio == pytest.approx(-2.0, abs=1e-6)


def test_fit_rate_degenerate():
    with pytest.raises(DegenerateSeries):
        fit_rate([_rec(t) for t in range(1, 5)], window=(1, 4))
    with pytest.raises(DegenerateSeries):
        fit_rate([_rec(t, fw_gap=0.0) for t in range(20)])


def test_theorem_bound_examples():
    assert theorem_bound("sublinear_convex", L=1.0, D2=1.0, nu=1.0, t=0) == 2.0
    assert theorem_bound("nonconvex_global", L=1.0, D2=1.0, h0=0.5, nu=1.0, T=3) == 1.0
    assert theorem_bound("local_sublinear", L=6.0, D2=1.0, mu=6.0, rho=2.0, nu=1.0, t=0) == 36.0
    # nu = 1/2 on the convex rate: 2^1.5 * 2 * 3 / 4^0.5
    assert theorem_bound("sublinear_convex", L=2.0, D2=3.0, nu=0.5, t=2) == pytest.approx(3 * 2**1.5, rel=1e-15)
    assert theorem_bound("linesearch_budget", L=1.0, L_init=1.0, eta=0.9, tau=2.0, beta=0.9, nu=1.0, t=99) == \
        linesearch_budget_bound(99, 0.9, 2.0, 0.9, 1.0, 1.0, 1.0)


def test_theorem_bound_errors():
    with pytest.raises(UnknownKind):
        theorem_bound("nope", L=1.0, D2=1.0)
    with pytest.raises(InvalidConstant):
        theorem_bound("sublinear_convex", L=-1.0, D2=1.0, t=0)
    with pytest.raises(InvalidConstant):
        theorem_bound("sublinear_convex", L=1.0, D2=1.0, nu=0.0, t=0)
    with pytest.raises(InvalidConstant):
        theorem_bound("nonconvex_global", L=1.0, D2=1.0, h0=-1.0, T=1)
    with pytest.raises(InvalidConstant):
        theorem_bound("local_sublinear", L=1.0, D2=1.0, t=0)


def test_check_bound_counts_violations():
    # bound 4 / (t + 2) with L = D2 = 1
    recs = [_rec(0, primal=1.0), _rec(1, primal=1.0), _rec(2, primal=1.1), _rec(6, primal=0.6)]
    v = check_bound(_run(recs), "sublinear_convex", fstar=0.0, L=1.0, D2=1.0, nu=1.0)
    assert (v.checked, v.violations) == (4, 2)
    assert v.worst_ratio == pytest.approx(1.2, rel=1e-12)
    assert v.violations_safety == 0 and not v.passed and v.passed_safety
    v = check_bound(_run(recs), "sublinear_convex", fstar=0.0, L=1.0, D2=1.0, nu=1.0, t_min=3)
    assert (v.checked, v.violations) == (1, 1)
    with pytest.raises(InvalidConstant):
        check_bound(_run(recs), "sublinear_convex", L=1.0, D2=1.0)
    with pytest.raises(UnknownKind):
        check_bound(_run(recs), "linesearch_budget", L=1.0, D2=1.0)


def test_check_bound_nonconvex_uses_best_gap():
    recs = [_rec(0, fw_gap=5.0), _rec(1, fw_gap=0.4), _rec(2, fw_gap=3.0), _rec(3, fw_gap=2.0)]
    v = check_bound(_run(recs), "nonconvex_global", L=1.0, D2=1.0, h0=0.5, nu=1.0)
    # best gap 0.4 against 2 max(0.5, 1) / 2 = 1
    assert v.checked == 1 and v.passed and v.worst_ratio == pytest.approx(0.4)


def test_audit_linesearch_budget_synthetic():
    spec = StepRuleSpec()
    first = linesearch_budget_bound(0, spec.eta, spec.tau, spec.beta, 1.0, 1.0, spec.L_init)
    ok = _run([_rec(0, inner=1), _rec(1, inner=1), _rec(2, inner=1)])
    audit = audit_linesearch_budget(ok, spec)
    assert audit.passed and audit.checked == 3 and audit.per_iteration == 1.5
    assert audit.worst_margin == pytest.approx(first - 1)
    bad = _run([_rec(0, inner=int(math.ceil(first)) + 5)])
    assert not audit_linesearch_budget(bad, spec).passed


def test_audit_linesearch_budget_real_run():
    q = Quadratic(np.diag([1.0, 4.0, 9.0]), np.array([0.2, -0.3, 0.9]))
    problem = make_problem(q, Euclidean(), SimplexLeqOne(3))
    spec = StepRuleSpec(L_init=0.01)
    res = fw_run(problem, spec, SolveConfig(max_iters=300, fw_gap_tolerance=0.0))
    audit = audit_linesearch_budget(res, spec)
    assert audit.checked > 0 and audit.passed


def test_toy_piecewise_afw_converges_geometrically():
    toy = ToyPiecewise()
    problem = make_problem(toy, Euclidean(), Box(-1.5, 0.5, shape=(1,)))
    # stop at 1e-12 so the fit sees the contraction rather than the rounding floor
    res = afw_run(problem, StepRuleSpec(), SolveConfig(max_iters=200, fw_gap_tolerance=1e-12), np.array([0.5]))
    assert res.termination is Termination.GAP_TOLERANCE
    fit = fit_rate(res, window=(0, res.last.t))
    assert fit.model is RateModel.GEOMETRIC and fit.exponent_or_ratio < 1
