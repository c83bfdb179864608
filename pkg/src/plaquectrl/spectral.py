"""Jacobi/Legendre polynomials, Gauss-type nodes, trial bases, differentiation matrices.

The spatial trial functions have zero slope at both endpoints (Neumann
boundary conditions are built in); the temporal trial functions vanish at
t = -1 (zero initial data is built in).  Collocation uses Legendre-Gauss
nodes in space and Legendre-Gauss-Radau nodes (right endpoint included) in
time.
"""

from __future__ import annotations

import functools

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor


def jacobi_eval(n: int, a: float, b: float, x: float, d: int = 0) -> float:
    """Evaluate the d-th derivative of the Jacobi polynomial J_n^{a,b} at x.

    Uses the three-term recurrence; derivatives via
    d/dx J_n^{a,b} = (n+a+b+1)/2 * J_{n-1}^{a+1,b+1}.

    Parameters
    ----------
    n : int
        Polynomial degree, n >= 0.
    a, b : float
        Jacobi exponents, both > -1.
    x : float or ndarray
        Evaluation point(s) in [-1, 1].
    d : int
        Derivative order, 0 <= d <= 2.
    """
    if n < 0:
        raise ValueError(f"degree must be nonnegative, got {n}")
    if d not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {d}")
    if a <= -1 or b <= -1:
        raise ValueError("Jacobi exponents must be > -1")
    xarr = np.asarray(x, dtype=float)
    if np.any(xarr < -1.0 - 1e-14) or np.any(xarr > 1.0 + 1e-14):
        raise ValueError("evaluation point outside [-1, 1]")
    if d == 0:
        return _jacobi_value(n, a, b, xarr)
    # d/dx J_n^{a,b} = (n+a+b+1)/2 * J_{n-1}^{a+1,b+1}, applied d times
    if n < d:
        return xarr * 0.0
    scale = 1.0
    deg, aa, bb = n, a, b
    for _ in range(d):
        scale *= 0.5 * (deg + aa + bb + 1)
        deg -= 1
        aa += 1.0
        bb += 1.0
    return scale * _jacobi_value(deg, aa, bb, xarr)


def _jacobi_value(n, a, b, x):
    """Three-term recurrence for J_n^{a,b}(x)."""
    ones = np.ones_like(x)
    if n == 0:
        return ones if np.ndim(x) else 1.0
    pm1 = ones
    p = 0.5 * ((a + b + 2.0) * x + (a - b))
    for k in range(1, n):
        k1 = k + 1.0
        denom = 2.0 * k1 * (k1 + a + b) * (2.0 * k + a + b)
        c1 = (2.0 * k + a + b + 1.0) * (a * a - b * b)
        c2 = (2.0 * k + a + b) * (2.0 * k + a + b + 1.0) * (2.0 * k + a + b + 2.0)
        c3 = 2.0 * (k + a) * (k + b) * (2.0 * k + a + b + 2.0)
        pnew = ((c1 + c2 * x) * p - c3 * pm1) / denom
        pm1, p = p, pnew
    return p if np.ndim(x) else float(p)


def _polish_roots(f, df, roots, max_newton=60):
    """Newton-polish approximate roots of f to near machine residual."""
    out = []
    for r in roots:
        x = r
        for _ in range(max_newton):
            fx = f(x)
            dfx = df(x)
            if dfx == 0.0:
                break
            step = fx / dfx
            x -= step
            if abs(step) < 1e-16:
                break
        out.append(x)
    return np.array(out)


def _bracketed_roots(f, n_roots, lo=-1.0, hi=1.0, oversample=16):
    """Find n_roots simple real roots of f in (lo, hi) via sign scan + bisection."""
    m = max(oversample * (n_roots + 1), 64)
    # Chebyshev-clustered sample points resolve endpoint-clustered roots
    theta = np.linspace(np.pi, 0.0, m)
    xs = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(theta)
    fs = np.array([f(x) for x in xs])
    roots = []
    for i in range(m - 1):
        if fs[i] == 0.0:
            roots.append(xs[i])
            continue
        if fs[i] * fs[i + 1] < 0.0:
            a_, b_ = xs[i], xs[i + 1]
            fa = fs[i]
            # a short bisection suffices: Newton polishing finishes the job
            for _ in range(24):
                mid = 0.5 * (a_ + b_)
                fm = f(mid)
                if fm == 0.0:
                    a_ = b_ = mid
                    break
                if fa * fm < 0.0:
                    b_ = mid
                else:
                    a_, fa = mid, fm
            roots.append(0.5 * (a_ + b_))
    if len(roots) != n_roots:
        raise RuntimeError(f"expected {n_roots} roots, bracketed {len(roots)}")
    return np.array(roots)


@functools.lru_cache(maxsize=None)
def _gauss_nodes_cached(N: int) -> np.ndarray:
    n = N + 1
    if n == 1:
        return np.array([0.0])
    f = lambda x: jacobi_eval(n, 0.0, 0.0, x, 0)
    df = lambda x: jacobi_eval(n, 0.0, 0.0, x, 1)
    rough = _bracketed_roots(f, n)
    nodes = _polish_roots(f, df, rough)
    nodes.sort()
    return nodes


def legendre_gauss_nodes(N: int) -> np.ndarray:
    """The N+1 Legendre-Gauss nodes: zeros of J_{N+1}^{0,0}, ascending."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    return _gauss_nodes_cached(int(N)).copy()


@functools.lru_cache(maxsize=None)
def _radau_nodes_cached(M: int) -> np.ndarray:
    if M == 0:
        return np.array([1.0])
    f = lambda x: jacobi_eval(M, 0.0, 0.0, x, 0) + jacobi_eval(M + 1, 0.0, 0.0, x, 0)
    df = lambda x: jacobi_eval(M, 0.0, 0.0, x, 1) + jacobi_eval(M + 1, 0.0, 0.0, x, 1)
    # deflate the known root at -1
    g = lambda x: f(x) / (1.0 + x)
    rough = _bracketed_roots(g, M, lo=-1.0 + 1e-9, hi=1.0)
    interior = _polish_roots(f, df, rough)
    nodes = np.sort(-np.concatenate([interior, [-1.0]]))
    nodes[-1] = 1.0
    return nodes


def legendre_gauss_radau_nodes(M: int) -> np.ndarray:
    """The M+1 Legendre-Gauss-Radau nodes on (-1, 1], last node exactly +1.

    Computed as the negated zeros of J_M^{0,0} + J_{M+1}^{0,0} (whose zero
    set contains -1), so the returned set contains +1 and excludes -1.
    """
    if M < 0:
        raise ValueError("M must be nonnegative")
    return _radau_nodes_cached(int(M)).copy()


@dataclass(frozen=True)
class PolynomialBasis:
    """A family of trial functions expressed in Legendre polynomials.

    ``coefficient_table[j]`` is a list of ``(degree, weight)`` pairs such
    that the j-th basis function (1-indexed in the math, 0-indexed here) is
    ``sum(weight * J_degree)``.
    """

    kind: str  # "space" or "time"
    degree_count: int
    coefficient_table: tuple

    def eval(self, x, d: int = 0) -> np.ndarray:
        """Values (or d-th derivatives) of every basis function at x.

        Returns an array of shape ``(degree_count,) + shape(x)``.
        """
        xarr = np.asarray(x, dtype=float)
        out = np.empty((self.degree_count,) + xarr.shape)
        for j, terms in enumerate(self.coefficient_table):
            acc = np.zeros_like(xarr)
            for deg, w in terms:
                acc += w * jacobi_eval(deg, 0.0, 0.0, xarr, d)
            out[j] = acc
        return out


def build_bases(N: int, M: int) -> tuple[PolynomialBasis, PolynomialBasis]:
    """Space basis p_j^1 (j=1..N) and time basis p_j^2 (j=1..M).

    p_j^1 = J_{j-1} - j(j-1)/((j+1)(j+2)) J_{j+1}   (zero slope at rho = +-1)
    p_j^2 = J_{j-1} + J_j                           (zero value at t = -1)
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be at least 1")
    space_terms = []
    for j in range(1, N + 1):
        c = j * (j - 1) / ((j + 1) * (j + 2))
        terms = [(j - 1, 1.0)]
        if c != 0.0:
            terms.append((j + 1, -c))
        space_terms.append(tuple(terms))
    time_terms = [((j - 1, 1.0), (j, 1.0)) for j in range(1, M + 1)]
    space = PolynomialBasis("space", N, tuple(space_terms))
    time = PolynomialBasis("time", M, tuple(time_terms))
    return space, time


@dataclass(frozen=True, eq=False)
class CollocationSetup:
    """Nodes, bases and differentiation matrices for one (N, M) grid.

    ``N`` spatial trial functions are collocated at ``N`` Legendre-Gauss
    nodes and ``M`` temporal trial functions at ``M`` Legendre-Gauss-Radau
    nodes, so every differentiation matrix is square.  Matrix convention
    follows ``[D^d]_{jk} = p_j^{(d)}(node_k)`` (row = basis function,
    column = node).
    """

    N: int
    M: int
    space_basis: PolynomialBasis
    time_basis: PolynomialBasis
    rho: np.ndarray  # (N,) Gauss nodes
    t: np.ndarray  # (M,) Radau nodes, t[-1] == 1
    D0r: np.ndarray
    D1r: np.ndarray
    D2r: np.ndarray
    D0t: np.ndarray
    D1t: np.ndarray
    # basis values at the interval endpoints (for boundary synthesis)
    space_at_m1: np.ndarray = field(repr=False, default=None)
    space_at_p1: np.ndarray = field(repr=False, default=None)
    time_at_p1: np.ndarray = field(repr=False, default=None)
    _lu_D0rT: tuple = field(repr=False, default=None, compare=False)

    def field_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values (N, M) of a field with coefficient matrix (N, M)."""
        return self.D0r.T @ coeffs @ self.D0t

    def eval_field(self, coeffs: np.ndarray, rho, t) -> np.ndarray:
        """Synthesize a coefficient matrix at arbitrary points (outer grid)."""
        Pr = self.space_basis.eval(np.atleast_1d(rho))  # (N, nr)
        Pt = self.time_basis.eval(np.atleast_1d(t))  # (M, nt)
        return Pr.T @ coeffs @ Pt

    def eval_time_series(self, coeffs: np.ndarray, t) -> np.ndarray:
        """Synthesize a time-coefficient vector (M,) at arbitrary times."""
        Pt = self.time_basis.eval(np.atleast_1d(t))
        return coeffs @ Pt

    def solve_space_values(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of the space basis interpolating nodal values."""
        from scipy.linalg import lu_solve

        return lu_solve(self._lu_D0rT, values)


def build_setup(N: int, M: int) -> CollocationSetup:
    """Assemble nodes, bases and all five differentiation matrices."""
    if N < 1 or M < 1:
        raise ValueError("N and M must be at least 1")
    space, time = build_bases(N, M)
    rho = legendre_gauss_nodes(N - 1)
    t = legendre_gauss_radau_nodes(M - 1)
    D0r = space.eval(rho, 0)
    D1r = space.eval(rho, 1)
    D2r = space.eval(rho, 2)
    D0t = time.eval(t, 0)
    D1t = time.eval(t, 1)
    setup = CollocationSetup(
        N=N,
        M=M,
        space_basis=space,
        time_basis=time,
        rho=rho,
        t=t,
        D0r=D0r,
        D1r=D1r,
        D2r=D2r,
        D0t=D0t,
        D1t=D1t,
        space_at_m1=space.eval(np.array([-1.0]))[:, 0],
        space_at_p1=space.eval(np.array([1.0]))[:, 0],
        time_at_p1=time.eval(np.array([1.0]))[:, 0],
        _lu_D0rT=lu_factor(D0r.T),
    )
    return setup
