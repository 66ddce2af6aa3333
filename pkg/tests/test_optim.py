import numpy as np
import pytest

from graybox.optim import (
    InfeasibleStartError,
    LineSearchError,
    OptimConfig,
    bfgs,
    check_gradient,
    fd_gradient,
    fd_jacobian,
    line_search_wolfe,
)


def rosenbrock(x):
    return (1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2


def rosenbrock_grad(x):
    return np.array([
        -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] ** 2),
        200.0 * (x[1] - x[0] ** 2),
    ])


def test_config_validation():
    with pytest.raises(ValueError, match="wolfe"):
        OptimConfig(wolfe_c1=0.5, wolfe_c2=0.1)
    with pytest.raises(ValueError, match="positive"):
        OptimConfig(grad_tol=0.0)
    with pytest.raises(ValueError, match="unknown"):
        OptimConfig.from_dict({"graad_tol": 1e-9})


def test_config_from_partial_dict():
    cfg = OptimConfig.from_dict({"max_iters": 7, "restarts": 2})
    assert cfg.max_iters == 7
    assert cfg.restarts == 2
    assert cfg.grad_tol == OptimConfig().grad_tol


def test_bfgs_quadratic():
    c = np.array([1.5, -2.0, 0.25])
    result = bfgs(lambda x: float((x - c) @ (x - c)), lambda x: 2.0 * (x - c), np.zeros(3))
    assert result.status == "converged-grad"
    assert result.iterations <= 3
    assert result.grad_norm <= 1e-10
    assert np.allclose(result.x_best, c, atol=1e-10)


def test_bfgs_rosenbrock():
    result = bfgs(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]))
    assert result.converged
    assert result.iterations <= 200
    assert np.allclose(result.x_best, [1.0, 1.0], atol=1e-6)


def test_bfgs_trace_monotone():
    result = bfgs(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]))
    values = [f for _, f, _ in result.trace]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_bfgs_deterministic():
    first = bfgs(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]))
    second = bfgs(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]))
    assert first.trace == second.trace
    assert np.array_equal(first.x_best, second.x_best)


def test_bfgs_infeasible_region_never_entered():
    # minimum of the smooth part sits at x0=2, behind the wall at x0=1
    def f(x):
        if x[0] > 1.0:
            return float("inf")
        return float((x[0] - 2.0) ** 2 + x[1] ** 2)

    seen = []

    def g(x):
        seen.append(x.copy())
        return np.array([2.0 * (x[0] - 2.0), 2.0 * x[1]])

    result = bfgs(f, g, np.array([0.0, 1.0]))
    assert result.x_best[0] <= 1.0 + 1e-12
    assert np.isfinite(result.f_best)
    assert all(point[0] <= 1.0 + 1e-12 for point in seen)


def test_bfgs_infeasible_start():
    with pytest.raises(InfeasibleStartError):
        bfgs(lambda x: float("inf"), lambda x: x, np.zeros(2))


def test_line_search_quadratic_unit_step():
    f = lambda x: float((x[0] - 1.0) ** 2)
    g = lambda x: np.array([2.0 * (x[0] - 1.0)])
    step = line_search_wolfe(f, g, np.array([0.0]), np.array([1.0]))
    assert 0.9 <= step <= 1.1


def test_line_search_rejects_ascent():
    f = lambda x: float(x @ x)
    g = lambda x: 2.0 * x
    with pytest.raises(ValueError, match="descent"):
        line_search_wolfe(f, g, np.array([1.0]), np.array([1.0]))


def test_line_search_shrinks_on_steep_function():
    # full gradient step overshoots by 100x, Armijo forces a short step
    f = lambda x: float(50.0 * x[0] ** 2)
    g = lambda x: np.array([100.0 * x[0]])
    x = np.array([0.1])
    step = line_search_wolfe(f, g, x, -g(x))
    assert step < 1.0
    assert f(x - step * g(x)) < f(x)


def test_line_search_exhaustion():
    # unbounded descent: the curvature condition can never be met
    f = lambda x: float(-x[0])
    g = lambda x: np.array([-1.0])
    with pytest.raises(LineSearchError):
        line_search_wolfe(f, g, np.array([0.0]), np.array([1.0]),
                          OptimConfig(max_line_search=5))


def test_fd_gradient_quadratic():
    g = fd_gradient(lambda x: float(x @ x), np.array([1.0, 2.0]))
    assert np.allclose(g, [2.0, 4.0], atol=1e-8)


def test_fd_gradient_linear_exact():
    w = np.array([3.0, -1.0, 0.5])
    g = fd_gradient(lambda x: float(w @ x), np.zeros(3))
    assert np.allclose(g, w, atol=1e-10)


def test_fd_gradient_reports_bad_coordinate():
    def f(x):
        return float("nan") if abs(x[1]) > 0.5 else float(x @ x)

    with pytest.raises(ValueError, match="coordinate 1"):
        fd_gradient(f, np.array([0.0, 0.5]))


def test_fd_jacobian_linear_exact():
    a = np.arange(6.0).reshape(2, 3)
    j = fd_jacobian(lambda x: a @ x, np.ones(3))
    assert np.allclose(j, a, atol=1e-9)


def test_check_gradient_pass_and_fail():
    f = lambda x: float(2.0 * x[0] ** 2 + x[1] ** 2)
    good = lambda x: np.array([4.0 * x[0], 2.0 * x[1]])
    flipped = lambda x: np.array([-4.0 * x[0], 2.0 * x[1]])
    x = np.array([0.7, -0.3])
    report = check_gradient(f, good, x)
    assert report.passed
    assert report.max_rel_err <= 1e-8
    report = check_gradient(f, flipped, x)
    assert not report.passed
    assert report.worst_coord == 0


def test_check_gradient_against_itself():
    f = lambda x: float(np.sin(x[0]) + x[1] ** 3)
    analytic = lambda x: fd_gradient(f, x)
    report = check_gradient(f, analytic, np.array([0.3, 1.1]))
    assert report.passed
    assert report.max_rel_err <= 1e-10


def test_trace_csv_format():
    result = bfgs(lambda x: float(x @ x), lambda x: 2.0 * x, np.array([1.0]))
    lines = result.trace_csv().strip().splitlines()
    assert lines[0] == "iter,f,grad_norm"
    assert lines[1].startswith("0,")
    assert len(lines) == len(result.trace) + 1
