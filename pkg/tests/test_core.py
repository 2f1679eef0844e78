import json

import numpy as np
import pytest

from bregfw import (Box, Entropy, IterationRecord, L2Ball, RunResult, SimplexLeqOne, SolveConfig, StepKind,
                    Termination, TheoryConstants, make_problem)
from bregfw.core import (DomainMismatch, DomainViolation, InvalidConstant, ShapeMismatch, as_point, axpy, inner)
from bregfw.experiments import generate_dataset
from bregfw.kernels import Burg, ObjectiveAsKernel


def test_as_point_reshapes_row_major():
    x = as_point(np.arange(6), shape=(2, 3))
    assert x.shape == (2, 3)
    assert x[1, 0] == 3.0


def test_as_point_rejects_bad_input():
    with pytest.raises(ShapeMismatch):
        as_point(np.arange(5), shape=(2, 3))
    with pytest.raises(DomainViolation):
        as_point([1.0, np.nan])
    with pytest.raises(ShapeMismatch):
        as_point(np.zeros((2, 2, 2)))


def test_inner_and_axpy_match_scalar_loops():
    rng = np.random.default_rng(0)
    for _ in range(100):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        x, y = rng.standard_normal(shape), rng.standard_normal(shape)
        a = float(rng.standard_normal())
        ref = 0.0
        for i in range(shape[0]):
            for j in range(shape[1]):
                ref += x[i, j] * y[i, j]
        assert inner(x, y) == pytest.approx(ref, rel=1e-12, abs=1e-14)
        z = axpy(a, x, y)
        for i in range(shape[0]):
            for j in range(shape[1]):
                assert z[i, j] == pytest.approx(a * x[i, j] + y[i, j], rel=1e-12, abs=1e-14)


def test_inner_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        inner(np.zeros(2), np.zeros(3))


@pytest.mark.parametrize("kwargs", [dict(nu=1.5), dict(nu=0.0), dict(heb_q=0.5), dict(smad_L=-1.0),
                                    dict(weak_rho=-0.1), dict(pyramidal_width_delta=0.0)])
def test_theory_constants_validation(kwargs):
    with pytest.raises(InvalidConstant):
        TheoryConstants(**kwargs)


def test_theory_constants_accept_valid_and_merge():
    c = TheoryConstants(nu=1.0, heb_q=1.0).merged(TheoryConstants(smad_L=3.0, nu=0.5))
    assert c.nu == 1.0 and c.smad_L == 3.0


def test_solve_config_defaults_and_validation():
    assert SolveConfig().fw_gap_tolerance == 1e-7
    for bad in (dict(max_iters=0), dict(fw_gap_tolerance=-1.0), dict(record_every=0), dict(rng_seed=-1),
                dict(rng_seed=2**64), dict(wall_clock_limit_seconds=0.0)):
        with pytest.raises(ValueError):
            SolveConfig(**bad)


def test_make_problem_kl_entropy_simplex():
    obj = generate_dataset({"name": "kl_inverse", "m": 6, "n": 4}, 0).objective()
    p = make_problem(obj, Entropy(), SimplexLeqOne(4))
    assert p.constants.smad_L == pytest.approx(obj.A.sum(axis=0).max())


def test_make_problem_lp_loss_objective_kernel():
    obj = generate_dataset({"name": "lp_loss", "m": 6, "n": 3}, 0).objective()
    p = make_problem(obj, ObjectiveAsKernel(obj), L2Ball(3, 1.0))
    assert p.constants.smad_L == 1.0


def test_make_problem_burg_on_simplex_is_rejected():
    obj = generate_dataset({"name": "kl_inverse", "m": 6, "n": 4}, 0).objective()
    with pytest.raises(DomainMismatch):
        make_problem(obj, Burg(), SimplexLeqOne(4))


def test_make_problem_entropy_on_box_with_negative_part_is_rejected():
    obj = generate_dataset({"name": "quadratic", "n": 3}, 0).objective()
    with pytest.raises(DomainMismatch):
        make_problem(obj, Entropy(), Box(-1, 1, shape=(3,)))


def _result():
    recs = [IterationRecord(t, 1.0 / (t + 1), 0.1 / (t + 1), 0.5, StepKind.FW, 2.0, 1.0, 1, 0.001 * t)
            for t in range(3)]
    recs.append(IterationRecord(3, 0.25, 1e-3, 0.0, StepKind.DROP, float("nan"), 0.3, 0, 0.01))
    return RunResult(records=recs, final_x=np.arange(6.0).reshape(2, 3), termination=Termination.MAX_ITERS,
                     total_inner_evals=3, info={"solver": "fw"})


def _same(a, b):
    return a == b or (isinstance(a, float) and np.isnan(a) and np.isnan(b))


def test_run_result_json_round_trip():
    res = _result()
    back = RunResult.from_json(res.to_json())
    assert back.termination is res.termination
    assert back.total_inner_evals == res.total_inner_evals
    assert back.info == res.info
    np.testing.assert_array_equal(back.final_x, res.final_x)
    for r, s in zip(res.records, back.records):
        for name in r.__dataclass_fields__:
            assert _same(getattr(r, name), getattr(s, name))
    json.loads(res.to_json())


def test_run_result_needs_records():
    with pytest.raises(ValueError):
        RunResult(records=[], final_x=np.zeros(1), termination=Termination.MAX_ITERS, total_inner_evals=0)
