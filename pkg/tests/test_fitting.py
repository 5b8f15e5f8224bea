import numpy as np
import pytest

from atomlink.fitting import FitConvergenceError, levenberg_marquardt


def test_linear_model_matches_normal_equations():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 40)
    y = 2.0 + 3.0 * x + rng.normal(0, 0.1, x.size)
    res = levenberg_marquardt(lambda p: p[0] + p[1] * x - y, [0.0, 0.0])
    X = np.column_stack([np.ones_like(x), x])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(res.params, beta, rtol=1e-7)
    # oracle covariance: s^2 (X^T X)^-1
    s2 = np.sum((X @ beta - y) ** 2) / (x.size - 2)
    np.testing.assert_allclose(res.cov, s2 * np.linalg.inv(X.T @ X), rtol=1e-5)


def test_rosenbrock_converges():
    res = levenberg_marquardt(lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]), [-1.2, 1.0], max_iter=1000)
    np.testing.assert_allclose(res.params, [1, 1], atol=1e-6)


def test_exponential_fit_with_analytic_jacobian():
    t = np.linspace(0, 5, 30)
    y = 1.5 * np.exp(-0.7 * t)
    res = levenberg_marquardt(
        lambda p: p[0] * np.exp(-p[1] * t) - y,
        [1.0, 1.0],
        lambda p: np.column_stack([np.exp(-p[1] * t), -p[0] * t * np.exp(-p[1] * t)]),
    )
    np.testing.assert_allclose(res.params, [1.5, 0.7], rtol=1e-8)


def test_bounds_are_respected():
    res = levenberg_marquardt(lambda p: p - 5.0, [0.0], bounds=([-1.0], [2.0]))
    assert res.params[0] == pytest.approx(2.0)


def test_non_convergence_reports_cost_and_trace():
    # a valley that needs many small steps
    with pytest.raises(FitConvergenceError) as err:
        levenberg_marquardt(lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]), [-1.2, 1.0], max_iter=2)
    assert np.isfinite(err.value.cost)
    assert len(err.value.trace) >= 2
    assert "final cost" in str(err.value)


def test_non_finite_start_raises():
    with pytest.raises(FitConvergenceError):
        levenberg_marquardt(lambda p: np.array([np.nan]), [0.0])
