"""Box-constrained minimization by sequential quadratic programming.

The optimal-control objective is only available as a black-box oracle (one
PDE solve per evaluation), so gradients are finite differences, the Hessian
is a damped-BFGS approximation, and each step solves a small box-constrained
quadratic subproblem with a primal active-set method.  Everything is
dependency-free, sequential and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class NlpOptions:
    """Tuning knobs for the SQP driver."""

    grad_step: float = 1e-5
    tol: float = 1e-6
    max_iter: int = 100
    armijo_c: float = 1e-4
    max_backtracks: int = 40


@dataclass
class NlpProblem:
    """A box-constrained minimization problem over an objective oracle."""

    dimension: int
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable[[np.ndarray], float]
    options: NlpOptions = field(default_factory=NlpOptions)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.dimension,) or self.upper.shape != (self.dimension,):
            raise ValueError("bounds must have shape (dimension,)")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.options.grad_step <= 0.0:
            raise ValueError("gradient step must be positive")


@dataclass
class NlpResult:
    """Outcome of :func:`sqp_minimize`."""

    x: np.ndarray
    fun: float
    trace: list  # accepted (x, f) pairs, f strictly decreasing
    iterations: int
    converged: bool
    message: str


def _step_sizes(problem: NlpProblem) -> np.ndarray:
    """Per-coordinate FD step: h scaled by the bound width where finite."""
    h = problem.options.grad_step
    width = problem.upper - problem.lower
    scale = np.where(np.isfinite(width) & (width > 0.0), width, 1.0)
    return h * scale


def fd_gradient(problem: NlpProblem, x) -> np.ndarray:
    """Finite-difference gradient: central where the box allows, one-sided at
    active bounds.  Coordinates are probed in index order."""
    x = np.asarray(x, dtype=float)
    steps = _step_sizes(problem)
    g = np.empty(problem.dimension)
    f0 = None
    for i in range(problem.dimension):
        h = steps[i]
        up_ok = x[i] + h <= problem.upper[i]
        dn_ok = x[i] - h >= problem.lower[i]
        e = np.zeros(problem.dimension)
        e[i] = h
        if up_ok and dn_ok:
            g[i] = (problem.objective(x + e) - problem.objective(x - e)) / (2.0 * h)
        elif up_ok:
            if f0 is None:
                f0 = problem.objective(x)
            g[i] = (problem.objective(x + e) - f0) / h
        elif dn_ok:
            if f0 is None:
                f0 = problem.objective(x)
            g[i] = (f0 - problem.objective(x - e)) / h
        else:
            g[i] = 0.0
    return g


def qp_subproblem(H, g, lower, upper, max_iter=200, kkt_tol=1e-10) -> np.ndarray:
    """Minimize (1/2) d'Hd + g'd subject to lower <= d <= upper.

    H must be symmetric positive definite.  Primal active-set iteration: fix
    the working set, solve the free-variable equality system, step to the
    nearest blocking bound, and release bound variables whose multiplier has
    the wrong sign.  Terminates when the projected KKT residual is below
    ``kkt_tol``.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = g.shape[0]
    d = np.clip(np.zeros(n), lower, upper)
    active = np.zeros(n, dtype=np.int8)  # -1 at lower, +1 at upper, 0 free
    active[d <= lower] = -1
    active[d >= upper] = 1

    for _ in range(max_iter):
        free = active == 0
        grad = H @ d + g
        # Release the worst bound variable whose multiplier points inward.
        lagr = np.where(active == -1, grad, np.where(active == 1, -grad, 0.0))
        step = np.zeros(n)
        if np.any(free):
            idx = np.where(free)[0]
            sol = np.linalg.solve(H[np.ix_(idx, idx)],
                                  -(g[idx] + H[np.ix_(idx, ~free)] @ d[~free]))
            step[idx] = sol - d[idx]
        if np.max(np.abs(step)) <= kkt_tol:
            worst = int(np.argmin(lagr))
            if lagr[worst] >= -kkt_tol:
                return d
            active[worst] = 0
            continue
        # Step toward the free-variable minimizer, stopping at the first bound.
        alpha = 1.0
        block = -1
        for i in np.where(free)[0]:
            if step[i] > 0 and d[i] + step[i] > upper[i]:
                a = (upper[i] - d[i]) / step[i]
                if a < alpha:
                    alpha, block = a, i
            elif step[i] < 0 and d[i] + step[i] < lower[i]:
                a = (lower[i] - d[i]) / step[i]
                if a < alpha:
                    alpha, block = a, i
        d = d + alpha * step
        if block >= 0:
            if step[block] > 0:
                d[block] = upper[block]
                active[block] = 1
            else:
                d[block] = lower[block]
                active[block] = -1
    raise RuntimeError("active-set iteration cap exceeded")


def _bfgs_update(B, s, y):
    """Damped BFGS update keeping B symmetric positive definite."""
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sBs <= 0.0:
        return B
    # Powell damping: blend y toward Bs when curvature is too weak.
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if sy <= 1e-14:
        return B
    B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (B + B.T)


def sqp_minimize(problem: NlpProblem, x0) -> NlpResult:
    """Damped-BFGS SQP with Armijo backtracking on the raw objective.

    Terminates when the projected-gradient norm drops below the tolerance or
    the iteration cap is reached; on line-search failure or a flat objective
    the best accepted iterate is returned with ``converged`` reflecting the
    projected-gradient test.  The trace of accepted (x, f) pairs is strictly
    decreasing in f.
    """
    opts = problem.options
    x = np.clip(np.asarray(x0, dtype=float), problem.lower, problem.upper)
    f = float(problem.objective(x))
    trace = [(x.copy(), f)]
    B = np.eye(problem.dimension)
    g = fd_gradient(problem, x)
    converged = False
    message = "iteration cap reached"
    it = 0
    for it in range(1, opts.max_iter + 1):
        pg = x - np.clip(x - g, problem.lower, problem.upper)
        if np.linalg.norm(pg, np.inf) < opts.tol:
            converged = True
            message = "projected gradient below tolerance"
            break
        d = qp_subproblem(B, g, problem.lower - x, problem.upper - x)
        slope = float(g @ d)
        if slope >= 0.0 or np.linalg.norm(d, np.inf) < 1e-16:
            message = "no descent direction"
            break
        alpha = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            xt = np.clip(x + alpha * d, problem.lower, problem.upper)
            ft = float(problem.objective(xt))
            if ft <= f + opts.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted or ft >= f:
            message = "line search stalled"
            break
        s = xt - x
        x, f = xt, ft
        trace.append((x.copy(), f))
        g_new = fd_gradient(problem, x)
        B = _bfgs_update(B, s, g_new - g)
        g = g_new
    if not converged:
        pg = x - np.clip(x - g, problem.lower, problem.upper)
        if np.linalg.norm(pg, np.inf) < opts.tol:
            converged = True
            message = "projected gradient below tolerance"
    return NlpResult(x=x, fun=f, trace=trace, iterations=it,
                     converged=converged, message=message)
