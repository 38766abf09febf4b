import numpy as np
import pytest

from nldenoise.lbfgs import NumericAbort, lbfgs_minimize


def quadratic(center):
    def objective(x):
        d = x - center
        return 0.5 * float(d @ d), d

    return objective


def test_quadratic_exactness():
    center = np.array([3.0, -1.5, 0.25])
    iterations = []
    out = lbfgs_minimize(
        quadratic(center),
        np.zeros(3),
        iters=10,
        callback=lambda it, f, g, s: iterations.append(it),
    )
    assert np.abs(out - center).max() <= 1e-10
    assert len(iterations) <= 3


def test_rosenbrock():
    def objective(x):
        a, b = x
        f = (1 - a) ** 2 + 100.0 * (b - a * a) ** 2
        g = np.array([-2 * (1 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
        return f, g

    out = lbfgs_minimize(objective, np.array([-1.2, 1.0]), iters=200)
    assert np.abs(out - 1.0).max() <= 1e-6


def test_random_psd_quadratic_gradient_norm():
    rng = np.random.default_rng(42)
    root = rng.normal(size=(50, 50))
    mat = root @ root.T + 0.1 * np.eye(50)
    rhs = rng.normal(size=50)

    def objective(x):
        return 0.5 * float(x @ mat @ x) - float(rhs @ x), mat @ x - rhs

    out = lbfgs_minimize(objective, np.zeros(50), iters=500)
    assert np.linalg.norm(mat @ out - rhs) <= 1e-8


def test_accepted_iterates_never_increase_objective():
    rng = np.random.default_rng(1)
    root = rng.normal(size=(20, 20))
    mat = root @ root.T + 0.05 * np.eye(20)

    def objective(x):
        return 0.5 * float(x @ mat @ x) + float(np.sum(np.cos(x))), mat @ x - np.sin(x) * -1.0

    values = []
    lbfgs_minimize(
        objective,
        rng.normal(size=20),
        iters=60,
        callback=lambda it, f, g, s: values.append(f),
    )
    # non-increasing up to the documented evaluation-noise allowance
    assert all(b <= a + 1e-12 * (1.0 + abs(a)) for a, b in zip(values, values[1:]))


def test_zero_iterations_returns_start():
    x0 = np.array([1.0, 2.0])
    out = lbfgs_minimize(quadratic(np.zeros(2)), x0, iters=0)
    assert np.array_equal(out, x0)


def test_non_finite_objective_aborts_with_diagnostics():
    # descent direction leads straight into the non-finite region
    def objective(x):
        if np.linalg.norm(x) > 2.0:
            return np.nan, np.zeros(2)
        return -float(np.sum(x)), -np.ones(2)

    with pytest.raises(NumericAbort) as excinfo:
        lbfgs_minimize(objective, np.zeros(2), iters=10)
    assert excinfo.value.iteration >= 1
    assert "iteration" in str(excinfo.value)


def test_returns_best_seen_iterate():
    center = np.array([2.0, 2.0])
    out = lbfgs_minimize(quadratic(center), np.zeros(2), iters=100)
    f, _ = quadratic(center)(out)
    assert f <= 1e-18
