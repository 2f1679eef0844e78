import math

import numpy as np
import pytest

from bregfw import (Box, Entropy, Euclidean, KSparsePolytope, L2Ball, Quartic, SimplexLeqOne, SolveConfig,
                    StepKind, StepRuleSpec, Termination, afw_run, fw_gap, fw_run, make_problem,
                    mirror_descent_run, projected_gradient_run)
from bregfw.core import InfeasibleStart, KernelMismatch, UnsupportedRegion
from bregfw.experiments import generate_dataset
from bregfw.objectives import Objective, Quadratic
from bregfw.solvers import ActiveSet


def _half_square(n=1):
    return Quadratic(np.eye(n))


class _Linear(Objective):
    name = "linear"

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)
        self.shape = self.c.shape

    def value(self, x):
        return float(self.c @ x)

    def gradient(self, x):
        return self.c.copy()

    def smad_constant(self):
        return 1.0, "entropy"


def test_fw_short_step_one_dimensional_trace():
    problem = make_problem(_half_square(), Euclidean(), Box(-1, 1, shape=(1,)))
    cfg = SolveConfig(max_iters=1, fw_gap_tolerance=0.0)
    # gap = 2, D(v, x) = 2: gamma = 2 / (L * 2 * 2)
    res = fw_run(problem, StepRuleSpec(kind="bregman_short", L=1.0, nu=1.0), cfg, np.array([1.0]))
    assert res.records[0].gamma == 0.5
    assert res.final_x[0] == 0.0
    res = fw_run(problem, StepRuleSpec(kind="bregman_short", L=2.0, nu=1.0), cfg, np.array([1.0]))
    assert res.records[0].gamma == 0.25
    assert res.final_x[0] == 0.5


def test_open_loop_first_step_lands_on_vertex():
    problem = make_problem(_half_square(2), Euclidean(), Box(-1, 1, shape=(2,)))
    res = fw_run(problem, StepRuleSpec(kind="open_loop"), SolveConfig(max_iters=1, fw_gap_tolerance=0.0),
                 np.array([0.3, 0.9]))
    np.testing.assert_array_equal(res.final_x, [-1.0, -1.0])


def test_converged_start_returns_immediately():
    problem = make_problem(_half_square(2), Euclidean(), Box(-1, 1, shape=(2,)))
    res = fw_run(problem, StepRuleSpec(), SolveConfig(), np.zeros(2))
    assert len(res.records) == 1
    assert res.termination is Termination.GAP_TOLERANCE
    assert res.last.gamma == 0.0


def test_fw_gap_examples():
    problem = make_problem(_half_square(2), Euclidean(), Box(-1, 1, shape=(2,)))
    assert fw_gap(problem, np.zeros(2))[0] == 0.0
    gap, v = fw_gap(problem, np.ones(2))
    assert gap == 4.0
    np.testing.assert_array_equal(v, [-1.0, -1.0])


def test_fw_gap_matches_vertex_enumeration():
    rng = np.random.default_rng(0)
    obj = generate_dataset({"name": "quadratic", "n": 5, "interior": False}, 1).objective()
    for region in (SimplexLeqOne(5), Box(-1, 1, shape=(5,)), KSparsePolytope(5, 2)):
        problem = make_problem(obj, Euclidean(), region)
        V = np.array(region.enumerate_vertices())
        for x in region.sample_interior(rng, 50):
            g = obj.gradient(x)
            assert abs(fw_gap(problem, x)[0] - float(np.max((x - V) @ g))) <= 1e-12 * (1 + np.abs(g).sum())


def test_infeasible_starts():
    problem = make_problem(_half_square(2), Euclidean(), Box(-1, 1, shape=(2,)))
    with pytest.raises(InfeasibleStart):
        fw_run(problem, StepRuleSpec(), SolveConfig(), np.array([2.0, 0.0]))
    kl = generate_dataset({"name": "kl_inverse", "m": 5, "n": 3}, 0).objective()
    problem = make_problem(kl, Entropy(), SimplexLeqOne(3))
    with pytest.raises(InfeasibleStart):
        fw_run(problem, StepRuleSpec(), SolveConfig(), np.array([0.0, 0.5, 0.5]))


def _fw_cases():
    quad = generate_dataset({"name": "quadratic", "n": 6, "interior": False}, 0).objective()
    pr = generate_dataset({"name": "phase_retrieval", "m": 20, "n": 6}, 0).objective()
    kl = generate_dataset({"name": "kl_inverse", "m": 10, "n": 6}, 0).objective()
    return [
        ("quad-box-adaptive", make_problem(quad, Euclidean(), Box(0, 1, shape=(6,))), StepRuleSpec(), None),
        ("quad-ball-short", make_problem(quad, Euclidean(), L2Ball(6, 2.0)),
         StepRuleSpec(kind="bregman_short", L=quad.smad_constant()[0], nu=1.0), None),
        ("pr-ksparse-adaptive", make_problem(pr, Quartic(), KSparsePolytope(6, 2)),
         StepRuleSpec(L_init=pr.smad_constant()[0]), None),
        ("kl-simplex-adaptive", make_problem(kl, Entropy(), SimplexLeqOne(6)), StepRuleSpec(), np.full(6, 1 / 6)),
        ("kl-simplex-short", make_problem(kl, Entropy(), SimplexLeqOne(6)),
         StepRuleSpec(kind="bregman_short", L=kl.smad_constant()[0], nu=1.0), np.full(6, 1 / 6)),
    ]


@pytest.mark.parametrize("label,problem,spec,x0", _fw_cases(), ids=lambda c: c if isinstance(c, str) else "")
def test_fw_feasible_and_monotone(label, problem, spec, x0):
    seen = []
    res = fw_run(problem, spec, SolveConfig(max_iters=300), x0, callback=lambda t, x, out: seen.append(x.copy()))
    assert len(seen) == res.last.t
    for x in seen:
        assert problem.region.contains(x, 1e-9)
    prim = res.series("primal")
    assert np.all(np.diff(prim) <= 1e-12 * (1 + np.abs(prim[:-1])))
    assert res.total_inner_evals == sum(r.inner_evals for r in res.records)


def test_record_every_and_terminal_record():
    problem = make_problem(_half_square(3), Euclidean(), Box(-1, 2, shape=(3,)))
    res = fw_run(problem, StepRuleSpec(kind="open_loop"), SolveConfig(max_iters=20, record_every=5,
                                                                     fw_gap_tolerance=0.0), np.full(3, 2.0))
    assert [r.t for r in res.records] == [0, 5, 10, 15, 20]
    assert res.termination is Termination.MAX_ITERS
    assert res.last.gamma == 0.0 and res.last.inner_evals == 0


def test_wall_clock_limit():
    obj = generate_dataset({"name": "quadratic", "n": 20, "interior": False}, 0).objective()
    problem = make_problem(obj, Euclidean(), Box(0, 1, shape=(20,)))
    res = fw_run(problem, StepRuleSpec(kind="open_loop"),
                 SolveConfig(max_iters=10**9, fw_gap_tolerance=0.0, wall_clock_limit_seconds=0.05))
    assert res.termination is Termination.WALL_CLOCK


class _Cliff(Objective):
    name = "cliff"
    shape = (1,)

    def value(self, x):
        return 0.5 * float(x[0] ** 2)

    def gradient(self, x):
        return np.array([float(x[0])])

    def f_divergence(self, x_plus, x, fx=None, grad=None):
        return math.inf


def test_line_search_failure_ends_run():
    problem = make_problem(_Cliff(), Euclidean(), Box(-1, 1, shape=(1,)))
    res = fw_run(problem, StepRuleSpec(max_inner=10), SolveConfig(), np.array([1.0]))
    assert res.termination is Termination.LINE_SEARCH_DIVERGED
    assert len(res.records) == 1


# ---------------------------------------------------------------- active set

def test_active_set_bookkeeping():
    e1, e2, z = np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.zeros(2)
    S = ActiveSet(e1)
    assert S.add(e2, 0.0) is True
    assert S.add(e2, 0.0) is False
    S.scale(0.5)
    S.add(e2, 0.5)
    assert len(S) == 2 and S.weights.sum() == 1.0
    np.testing.assert_allclose(S.iterate(), [0.5, 0.5])
    S.add(z, 0.0)
    v, w = S.away_vertex(np.array([1.0, 1.0]))
    np.testing.assert_array_equal(v, e1)  # tie between e1 and e2 goes to the first atom
    S.remove(e2)
    assert e2 not in S and len(S) == 2
    S.renormalize()
    assert S.weights.sum() == pytest.approx(1.0)
    assert np.array([-0.0, 0.0]) in S  # signed zeros share a key
    S.reset(e2)
    assert len(S) == 1 and S.weight(e2) == 1.0


def test_afw_requires_polytope():
    problem = make_problem(_half_square(2), Euclidean(), L2Ball(2, 1.0))
    with pytest.raises(UnsupportedRegion):
        afw_run(problem, StepRuleSpec())


def test_afw_two_dimensional_example():
    obj = Quadratic(2.0 * np.eye(2), np.array([0.25, 0.0]))
    problem = make_problem(obj, Euclidean(), SimplexLeqOne(2))
    kinds = []
    holder = {}

    def cb(t, x, S, kind):
        kinds.append(kind)
        holder["S"] = S

    res = afw_run(problem, StepRuleSpec(), SolveConfig(max_iters=200, fw_gap_tolerance=1e-12),
                  np.array([1.0, 0.0]), callback=cb)
    assert kinds[0] is StepKind.FW  # singleton start: away gap is zero
    np.testing.assert_allclose(res.final_x, [0.25, 0.0], atol=1e-9)
    S = holder["S"]
    support = {tuple(v) for v in S.vertices}
    assert support == {(0.0, 0.0), (1.0, 0.0)}
    np.testing.assert_allclose(S.iterate(), [0.25, 0.0], atol=1e-9)


def test_afw_direction_choice_matches_line_test():
    obj = generate_dataset({"name": "quadratic", "n": 8, "interior": False}, 3).objective()
    problem = make_problem(obj, Euclidean(), Box(0, 1, shape=(8,)))
    x0 = problem.region.lmo(np.ones(8))
    state = {"x": x0, "atoms": [(x0.copy(), 1.0)], "bad": 0, "away": 0}

    def cb(t, x, S, kind):
        xp, atoms = state["x"], state["atoms"]
        g = obj.gradient(xp)
        gap = float(g @ (xp - problem.region.lmo(g)))
        # first maximiser of <g, v> over the previous atoms
        vals = [float(g @ v) for v, _ in atoms]
        away_gap = max(vals) - float(g @ xp)
        expect_fw = gap >= away_gap or len(atoms) == 1
        state["bad"] += expect_fw != (kind is StepKind.FW)
        state["away"] += kind is not StepKind.FW
        state["x"] = x.copy()
        state["atoms"] = [(v.copy(), w) for v, w in zip(S.vertices, S.weights)]

    afw_run(problem, StepRuleSpec(kind="open_loop"), SolveConfig(max_iters=300, fw_gap_tolerance=0.0), x0,
            callback=cb)
    assert state["bad"] == 0
    assert state["away"] > 0


def test_afw_drop_removes_one_atom():
    obj = generate_dataset({"name": "quadratic", "n": 10, "interior": False}, 0).objective()
    problem = make_problem(obj, Euclidean(), Box(0, 1, shape=(10,)))
    sizes = []
    res = afw_run(problem, StepRuleSpec(kind="open_loop"), SolveConfig(max_iters=300, fw_gap_tolerance=0.0),
                  callback=lambda t, x, S, kind: sizes.append((len(S), kind)))
    drops = [i for i, (_, k) in enumerate(sizes) if k is StepKind.DROP]
    assert drops and len(drops) == res.info["drops"]
    for i in drops:
        prev = sizes[i - 1][0] if i else 1
        assert sizes[i][0] == prev - 1


# ---------------------------------------------------------------- baselines

def _md_problem(c):
    return make_problem(_Linear(c), Entropy(), SimplexLeqOne(len(c)))


def test_mirror_descent_zero_gradient_keeps_x():
    x0 = np.array([0.2, 0.3])
    res = mirror_descent_run(_md_problem([0.0, 0.0]), 1.0, SolveConfig(max_iters=1, fw_gap_tolerance=0.0), x0)
    np.testing.assert_allclose(res.final_x, x0, rtol=1e-15)


def test_mirror_descent_multiplicative_step_kept_under_cap():
    res = mirror_descent_run(_md_problem([math.log(2.0), 0.0]), 1.0,
                             SolveConfig(max_iters=1, fw_gap_tolerance=0.0), np.array([0.5, 0.5]))
    np.testing.assert_allclose(res.final_x, [0.25, 0.5], rtol=1e-14)


def test_mirror_descent_normalises_when_cap_violated():
    x0 = np.array([0.3, 0.3])
    res = mirror_descent_run(_md_problem([-5.0, -1.0]), 1.0, SolveConfig(max_iters=1, fw_gap_tolerance=0.0), x0)
    assert res.final_x.sum() == pytest.approx(1.0, rel=1e-15)
    y = x0 * np.exp([5.0, 1.0])
    np.testing.assert_allclose(res.final_x, y / y.sum(), rtol=1e-13)


def test_mirror_descent_is_kl_projection():
    # the normalised step minimises <g, x> + KL(x, x0) over the capped simplex; compare on a grid
    g, x0 = np.array([-2.0, 0.5]), np.array([0.4, 0.4])
    res = mirror_descent_run(_md_problem(g), 1.0, SolveConfig(max_iters=1, fw_gap_tolerance=0.0), x0)
    grid = np.array([(a, b) for a in np.linspace(1e-4, 1, 500) for b in np.linspace(1e-4, 1, 500) if a + b <= 1])
    obj = grid @ g + np.sum(grid * np.log(grid / x0) - grid + x0, axis=1)
    x = res.final_x
    best = obj.min()
    assert g @ x + np.sum(x * np.log(x / x0) - x + x0) <= best + 1e-9


def test_mirror_descent_requirements():
    quad = _half_square(2)
    with pytest.raises(KernelMismatch):
        mirror_descent_run(make_problem(quad, Euclidean(), SimplexLeqOne(2)), 1.0)
    with pytest.raises(UnsupportedRegion):
        mirror_descent_run(make_problem(quad, Euclidean(), Box(0, 1, shape=(2,))), 1.0)


def test_mirror_descent_converges_on_kl():
    data = generate_dataset({"name": "kl_inverse", "m": 10, "n": 5}, 0)
    problem = make_problem(data.objective(), Entropy(), SimplexLeqOne(5))
    res = mirror_descent_run(problem, None, SolveConfig(max_iters=2000))
    assert res.last.primal - data.fstar < 1e-6
    assert res.series("primal")[-1] < res.series("primal")[0]


def test_projected_gradient():
    obj = Quadratic(np.eye(2), np.array([2.0, 0.0]))
    res = projected_gradient_run(make_problem(obj, Euclidean(), L2Ball(2, 1.0)), 1.0, SolveConfig(max_iters=5))
    np.testing.assert_allclose(res.final_x, [1.0, 0.0], atol=1e-12)
    obj = Quadratic(np.eye(2), np.array([1.5, -0.2]))
    res = projected_gradient_run(make_problem(obj, Euclidean(), Box(0, 1, shape=(2,))), 1.0, SolveConfig(max_iters=5))
    np.testing.assert_array_equal(res.final_x, [1.0, 0.0])
    obj = Quadratic(np.eye(2), np.array([0.8, 0.8]))
    res = projected_gradient_run(make_problem(obj, Euclidean(), SimplexLeqOne(2)), 1.0, SolveConfig(max_iters=5))
    np.testing.assert_allclose(res.final_x, [0.5, 0.5], atol=1e-12)
    with pytest.raises(UnsupportedRegion):
        projected_gradient_run(make_problem(_half_square(3), Euclidean(), KSparsePolytope(3, 2)), 1.0)
