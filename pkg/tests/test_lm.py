import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpl.errors import DomainError
from hpl.lm import lm_minimize


def linear(M, y):
    return lambda b: (M @ b - y, M)


def rosenbrock(v):
    x, y = v
    r = np.array([10.0 * (y - x * x), 1.0 - x])
    J = np.array([[-20.0 * x, 10.0], [-1.0, 0.0]])
    return r, J


def test_linear_problem_in_three_iterations():
    rng = np.random.default_rng(0)
    M, y = rng.normal(size=(40, 4)), rng.normal(size=40)
    x, diag = lm_minimize(linear(M, y), np.zeros(4))
    assert diag.iterations <= 3
    assert np.allclose(x, np.linalg.solve(M.T @ M, M.T @ y), atol=1e-9)


def test_rosenbrock():
    x, diag = lm_minimize(rosenbrock, [-1.2, 1.0])
    assert np.max(np.abs(x - 1.0)) < 1e-6
    assert diag.converged


def test_optimal_start():
    x, diag = lm_minimize(rosenbrock, [1.0, 1.0])
    assert diag.iterations <= 1 and diag.reason == "gradient"
    assert np.array_equal(x, [1.0, 1.0])


def test_nonfinite_start():
    with pytest.raises(DomainError):
        lm_minimize(lambda v: (np.array([np.nan]), np.ones((1, 1))), [0.0])


def test_max_iter_flagged():
    x, diag = lm_minimize(rosenbrock, [-1.2, 1.0], max_iter=2)
    assert diag.reason == "max_iter" and diag.max_iter_warning and not diag.converged
    assert diag.to_record()["iterations"] == 2


def test_box_projection():
    M = np.eye(2)
    x, _ = lm_minimize(linear(M, np.array([5.0, -5.0])), [0.0, 0.0], lower=[-1, -1], upper=[1, 1])
    assert np.allclose(x, [1.0, -1.0])


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_costs_monotone(a, b):
    _, diag = lm_minimize(rosenbrock, [a, b])
    assert all(c1 <= c0 for c0, c1 in zip(diag.costs, diag.costs[1:]))
