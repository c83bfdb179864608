"""Box-constrained SQP driver, FD gradients and the QP subproblem."""

import numpy as np
import pytest

from plaquectrl.nlp import (
    NlpOptions,
    NlpProblem,
    fd_gradient,
    qp_subproblem,
    sqp_minimize,
)


def _problem(f, lower, upper, **opts):
    lower = np.asarray(lower, dtype=float)
    return NlpProblem(dimension=lower.size, lower=lower,
                      upper=np.asarray(upper, dtype=float), objective=f,
                      options=NlpOptions(**opts))


class TestFdGradient:
    def test_quadratic(self):
        p = _problem(lambda x: float(x[0] ** 2), [0.0], [1.0])
        g = fd_gradient(p, np.array([0.5]))
        assert abs(g[0] - 1.0) < 1e-8

    def test_constant(self):
        p = _problem(lambda x: 3.0, [0.0, 0.0], [1.0, 1.0])
        assert np.all(fd_gradient(p, np.array([0.2, 0.9])) == 0.0)

    def test_one_sided_at_upper_bound(self):
        p = _problem(lambda x: float(np.sum(x)), [0.0, 0.0], [1.0, 1.0])
        g = fd_gradient(p, np.array([1.0, 1.0]))
        assert np.allclose(g, 1.0, atol=1e-6)

    def test_matches_analytic_on_quadratic_relative(self):
        A = np.diag([1.0, 3.0, 0.5])
        f = lambda x: float(0.5 * x @ A @ x)
        p = _problem(f, [-2.0] * 3, [2.0] * 3)
        x = np.array([0.3, -0.7, 1.1])
        assert np.allclose(fd_gradient(p, x), A @ x, rtol=1e-6, atol=1e-9)

    def test_invariants_validated(self):
        with pytest.raises(ValueError):
            _problem(lambda x: 0.0, [1.0], [0.0])
        with pytest.raises(ValueError):
            _problem(lambda x: 0.0, [0.0], [1.0], grad_step=0.0)


class TestQpSubproblem:
    def test_unconstrained_minimizer(self):
        d = qp_subproblem(np.eye(2), np.array([-1.0, 0.0]),
                          np.full(2, -10.0), np.full(2, 10.0))
        assert np.allclose(d, [1.0, 0.0], atol=1e-10)

    def test_clipped_at_bound(self):
        d = qp_subproblem(np.eye(1), np.array([-3.0]),
                          np.array([-10.0]), np.array([1.0]))
        assert np.allclose(d, [1.0], atol=1e-12)

    def test_mixed_active_set(self):
        H = np.diag([1.0, 4.0])
        d = qp_subproblem(H, np.array([-1.0, -4.0]),
                          np.full(2, -np.inf), np.array([0.5, 2.0]))
        assert np.allclose(d, [0.5, 1.0], atol=1e-10)

    def test_kkt_residual_small(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(4, 4))
        H = A @ A.T + 4.0 * np.eye(4)
        g = rng.normal(size=4)
        lo, hi = np.full(4, -0.3), np.full(4, 0.4)
        d = qp_subproblem(H, g, lo, hi)
        grad = H @ d + g
        free = (d > lo + 1e-12) & (d < hi - 1e-12)
        assert np.max(np.abs(grad[free]), initial=0.0) < 1e-9
        assert np.all(d >= lo - 1e-12) and np.all(d <= hi + 1e-12)
        # bound multipliers have the right sign
        assert np.all(grad[d >= hi - 1e-12] <= 1e-9)
        assert np.all(grad[d <= lo + 1e-12] >= -1e-9)


class TestSqpMinimize:
    def test_interior_quadratic(self):
        p = _problem(lambda x: float((x[0] - 0.3) ** 2), [0.0], [1.0])
        r = sqp_minimize(p, np.array([0.0]))
        assert r.converged and abs(r.x[0] - 0.3) < 1e-6

    def test_bound_active_quadratic(self):
        p = _problem(lambda x: float((x[0] - 2.0) ** 2), [0.0], [1.0])
        r = sqp_minimize(p, np.array([0.0]))
        assert abs(r.x[0] - 1.0) < 1e-8

    def test_rosenbrock_in_box(self):
        f = lambda x: float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)
        p = _problem(f, [0.0, 0.0], [2.0, 2.0], max_iter=200)
        r = sqp_minimize(p, np.array([0.0, 0.0]))
        assert r.fun < 1e-6

    def test_trace_strictly_decreasing_and_feasible(self):
        f = lambda x: float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)
        p = _problem(f, [0.0, 0.0], [2.0, 2.0], max_iter=200)
        r = sqp_minimize(p, np.array([0.0, 0.0]))
        fs = [fv for _, fv in r.trace]
        assert all(b < a for a, b in zip(fs, fs[1:]))
        for x, _ in r.trace:
            assert np.all(x >= -1e-14) and np.all(x <= 2.0 + 1e-14)

    def test_flat_objective_never_raises(self):
        p = _problem(lambda x: 1.0, [0.0] * 3, [1.0] * 3)
        r = sqp_minimize(p, np.array([0.5, 0.5, 0.5]))
        assert r.converged and r.fun == 1.0

    def test_max_iter_zero_returns_initial(self):
        p = _problem(lambda x: float(x[0] ** 2), [0.0], [1.0], max_iter=0)
        r = sqp_minimize(p, np.array([0.7]))
        assert r.x[0] == 0.7 and r.iterations == 0

    def test_infeasible_start_projected(self):
        p = _problem(lambda x: float((x[0] - 0.3) ** 2), [0.0], [1.0])
        r = sqp_minimize(p, np.array([5.0]))
        assert abs(r.x[0] - 0.3) < 1e-6
