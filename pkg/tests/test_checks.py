import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lvhba.checks import CheckResult, central_difference, check_value_gradient, relative_error, validate_problem


def test_central_difference_of_vector_function():
    jac = central_difference(lambda w: np.array([w[0] * w[1], w[0] ** 2]), np.array([2.0, 3.0]))
    assert jac.shape == (2, 2)
    assert_allclose(jac, [[3.0, 2.0], [4.0, 0.0]], atol=1e-6)


def test_relative_error_floor():
    assert relative_error(np.array([1e-3]), np.array([0.0])) == pytest.approx(1e-3)
    assert relative_error(np.array([4.0]), np.array([2.0])) == pytest.approx(1.0)


def test_valid_problem_passes(scalar_problem):
    report = validate_problem(scalar_problem)
    assert report.passed
    assert [r.name for r in report.results] == [
        "g_dimension", "grad_F", "grad_f", "jac_g", "F_lower", "convexity_f", "convexity_g",
    ]


def test_concave_lower_level_fails_with_witness(scalar_problem):
    concave = dataclasses.replace(
        scalar_problem,
        eval_f=lambda x, y: -0.5 * float(y[0] ** 2),
        grad_f=lambda x, y: (np.zeros(1), -y),
    )
    report = validate_problem(concave)
    assert not report.passed
    result = report["convexity_f"]
    assert not result.passed
    assert result.value > 0.0
    assert set(result.witness) == {"x", "y1", "y2"}
    assert "witness=" in result.line()


def test_wrong_gradient_is_flagged(scalar_problem):
    doubled = dataclasses.replace(scalar_problem, grad_f=lambda x, y: (np.zeros(1), 2.0 * y))
    report = validate_problem(doubled, samples=50)
    assert not report["grad_f"].passed
    # a doubled gradient is off by its own norm; samples with |y| >= 1 see exactly 1.0
    assert report["grad_f"].value == pytest.approx(1.0, rel=1e-6)
    assert report["grad_F"].passed


def test_wrong_constraint_count_is_flagged(scalar_problem):
    wide = dataclasses.replace(scalar_problem, eval_g=lambda x, y: np.concatenate([y - x, y - x]))
    report = validate_problem(wide, samples=5)
    assert not report["g_dimension"].passed


def test_lower_bound_violation(scalar):
    problem = dataclasses.replace(scalar.problem, F_lower=10.0,
                                  eval_F=lambda x, y: float(x[0] ** 2), grad_F=lambda x, y: (2.0 * x, 0.0 * y))
    report = validate_problem(problem)
    assert not report["F_lower"].passed
    assert report["F_lower"].value > 0.0


def test_missing_lower_bound_is_skipped(scalar_problem):
    report = validate_problem(dataclasses.replace(scalar_problem, F_lower=None))
    assert report["F_lower"].passed
    assert "skipped" in report["F_lower"].detail


def test_value_gradient_check_reports(scalar):
    cfg = scalar.default_config
    result = check_value_gradient(scalar.problem, cfg.gamma, cfg.r, points=5, seed=1)
    assert isinstance(result, CheckResult)
    assert result.name == "grad_v"
    assert result.passed
    assert result.line().startswith("[PASS] grad_v")
