"""Indirect optimal-control route: adjoint system + shooting + Runge-Kutta.

Spatial collocation reduces the coupled state/adjoint PDE system to a
first-order ODE system in time with the state blocks given at t = -1 and
the adjoint blocks at t = +1.  The unknown adjoint initial data (one value
per spatial collocation node for each adjoint field, plus the boundary
adjoint) is found by Newton iteration on the terminal-condition residual;
the inner initial-value problems are integrated with classical RK4 and the
bang-bang control is recovered from the switching function during the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import model
from .params import ModelParameters
from .spectral import CollocationSetup

RESIDUAL_SENTINEL = 1e6


class IntegrationError(RuntimeError):
    """RK4 produced a non-finite state; carries the offending time."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"non-finite state at t = {t}")


class SingularJacobianError(np.linalg.LinAlgError):
    """Shooting Jacobian is singular; lists the near-degenerate columns."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"singular shooting Jacobian (degenerate columns {self.columns})")


@dataclass(frozen=True)
class ShootingVector:
    """Unknown initial data: nodal values for the three adjoint fields
    (N each) followed by the boundary adjoint initial value."""

    s: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "s", arr)
        if arr.ndim != 1 or (arr.size - 1) % 3 != 0:
            raise ValueError("shooting vector must have length 3N + 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("shooting vector entries must be finite")

    @property
    def N(self) -> int:
        return (self.s.size - 1) // 3


@dataclass
class AdjointSolution:
    """Full trajectories of one converged (or best-effort) shooting solve."""

    time_grid: np.ndarray
    alpha_L: np.ndarray  # (steps+1, N) state coefficient trajectories
    alpha_H: np.ndarray
    alpha_F: np.ndarray
    beta_PL: np.ndarray  # adjoint coefficient trajectories
    beta_PH: np.ndarray
    beta_PF: np.ndarray
    R: np.ndarray
    P_R: np.ndarray
    phi: np.ndarray  # recovered bang-bang control samples on time_grid
    switching_times: list
    tie_break_samples: np.ndarray  # mask: phi held by the xi = 0 tie-break
    shooting: ShootingVector
    residual_norm: float
    newton_iterations: int
    converged: bool
    setup: CollocationSetup = dc_field(repr=False, default=None)

    def field_nodes(self, which: str) -> np.ndarray:
        """Nodal trajectory (steps+1, N) of one state or adjoint field."""
        traj = {"L": self.alpha_L, "H": self.alpha_H, "F": self.alpha_F,
                "P_L": self.beta_PL, "P_H": self.beta_PH,
                "P_F": self.beta_PF}[which]
        return traj @ self.setup.D0r


def _unpack(y, N):
    aL = y[0:N]
    aH = y[N:2 * N]
    aF = y[2 * N:3 * N]
    bPL = y[3 * N:4 * N]
    bPH = y[4 * N:5 * N]
    bPF = y[5 * N:6 * N]
    R = y[6 * N]
    PR = y[6 * N + 1]
    return aL, aH, aF, bPL, bPH, bPF, R, PR


def ode_rhs(t, y, setup: CollocationSetup, params: ModelParameters,
            phi: float) -> np.ndarray:
    """Time derivative of the packed state/adjoint collocation system.

    Packed layout: [alpha_L | alpha_H | alpha_F | beta_PL | beta_PH |
    beta_PF | R | P_R].  The spatial mass matrix is applied through the
    factorization cached on ``setup``; velocity and its adjoint are resolved
    afresh from the current state.  ``phi`` is the control value in force.
    """
    p = params
    N = setup.N
    aL, aH, aF, bPL, bPH, bPF, R, PR = _unpack(y, N)
    if R + p.eps >= 1.0:
        raise model.OcclusionError(f"R + eps >= 1 during integration (R = {R})")
    rho = setup.rho
    Lg = setup.D0r.T @ aL
    Hg = setup.D0r.T @ aH
    Fg = setup.D0r.T @ aF
    dFg = setup.D1r.T @ aF
    fields = {"L": Lg, "H": Hg, "F": Fg}
    v_nodes, v_inner, dv_inner, dv_nodes = model.velocity_solve(
        R, t, fields, p, setup, return_slope=True)
    fields["v"] = v_nodes

    # State blocks: (2/T) M a' = F_S + G1 (D2' a) - G2 (D1' a).
    g11 = model.coeff("g11", 0.0, R, 0.0, 0.0, p)
    g31 = model.coeff("g31", 0.0, R, 0.0, 0.0, p)
    g12 = model.coeff("g12", rho, R, v_inner, v_nodes, p)
    g32 = model.coeff("g32", rho, R, v_inner, v_nodes, p)
    half_T = p.T / 2.0
    dy = np.empty_like(y)

    def state_block(kind, a, g1, g2):
        f = model.rhs(kind, rho, t, R, v_inner, fields, phi, p)
        rhs_vec = f + g1 * (setup.D2r.T @ a) - g2 * (setup.D1r.T @ a)
        return half_T * setup.solve_space_values(rhs_vec)

    dy[0:N] = state_block("fL", aL, g11, g12)
    dy[N:2 * N] = state_block("fH", aH, g11, g12)
    dy[2 * N:3 * N] = state_block("fF", aF, g31, g32)

    # Adjoint blocks: (2/T) M b' = F_C - G1 (D2' b) - G2adj (D1' b).
    PLg = setup.D0r.T @ bPL
    PHg = setup.D0r.T @ bPH
    PFg = setup.D0r.T @ bPF
    Pv = model.adjoint_velocity_solve(R, t, fields, PFg, dFg, p, setup)
    adjoints = {"P_L": PLg, "P_H": PHg, "P_F": PFg, "P_v": Pv}
    g42 = model.coeff("g42", rho, R, v_inner, v_nodes, p)
    g62 = model.coeff("g62", rho, R, v_inner, v_nodes, p, F=Fg,
                      dv_drho=dv_nodes,
                      dfv_dF=model.fv_dF(rho, R, fields, p))

    def adjoint_block(kind, b, g1, g2):
        f = model.adjoint_rhs(kind, rho, t, R, fields, adjoints, phi, p)
        rhs_vec = f - g1 * (setup.D2r.T @ b) - g2 * (setup.D1r.T @ b)
        return half_T * setup.solve_space_values(rhs_vec)

    dy[3 * N:4 * N] = adjoint_block("fPL", bPL, g11, g42)
    dy[4 * N:5 * N] = adjoint_block("fPH", bPH, g11, g42)
    dy[5 * N:6 * N] = adjoint_block("fPF", bPF, g31, g62)

    dy[6 * N] = half_T * v_inner
    dy[6 * N + 1] = -half_T * (2.0 / (1.0 - R)) * dv_inner * PR
    return dy


def rk4_integrate(rhs, y0, time_grid) -> np.ndarray:
    """Classical fourth-order Runge-Kutta over a uniform grid.

    ``rhs`` is called as ``rhs(t, y)``.  Returns the trajectory at every
    grid point, shape (len(time_grid), len(y0)).  A non-finite state aborts
    with :class:`IntegrationError` carrying the offending time.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    y = np.asarray(y0, dtype=float).copy()
    out = np.empty((time_grid.size, y.size))
    out[0] = y
    for n in range(time_grid.size - 1):
        t = time_grid[n]
        h = time_grid[n + 1] - t
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(float(time_grid[n + 1]))
        out[n + 1] = y
    return out


def _control_from_xi(xi_value, phi_prev, Kbound):
    """Bang-bang law with the tie held at the previous value."""
    if xi_value < 0.0:
        return Kbound, False
    if xi_value > 0.0:
        return 0.0, False
    return phi_prev, True


def _xi_at_inner(y, setup, params):
    """Switching function at rho = -1 for the packed state."""
    N = setup.N
    aL, aH, aF, bPL, bPH, bPF, R, PR = _unpack(y, N)
    e = setup.space_at_m1
    Hg = setup.D0r.T @ aH
    Fg = setup.D0r.T @ aF
    fields_n = {"L": setup.D0r.T @ aL, "H": Hg, "F": Fg}
    _, v_inner, _ = model.velocity_solve(R, -1.0, fields_n, params, setup)
    fields = {"H": float(e @ aH), "F": float(e @ aF), "v": v_inner}
    adjoints = {"P_H": float(e @ bPH), "P_F": float(e @ bPF)}
    return float(model.switching_xi(-1.0, 0.0, fields, adjoints, R, params))


def _integrate_with_control(y0, setup, params, n_steps, store=False):
    """Forward sweep applying the bang-bang law at every grid point.

    The control is refreshed from the sign of the switching function at the
    start of each step and held constant across the RK4 stages.  Returns
    (terminal y, time_grid, trajectory or None, phi samples, tie mask,
    switching times).
    """
    grid = np.linspace(-1.0, 1.0, n_steps + 1)
    h = 2.0 / n_steps
    y = np.asarray(y0, dtype=float).copy()
    traj = np.empty((grid.size, y.size)) if store else None
    phi_samples = np.empty(grid.size)
    tie_mask = np.zeros(grid.size, dtype=bool)
    switching = []
    phi_prev = 0.0
    xi_prev = None
    if store:
        traj[0] = y
    for n in range(grid.size):
        t = grid[n]
        xi = _xi_at_inner(y, setup, params)
        phi, tie = _control_from_xi(xi, phi_prev, params.Kbound)
        phi_samples[n] = phi
        tie_mask[n] = tie
        if xi_prev is not None and xi_prev * xi < 0.0:
            # linear estimate of the crossing inside the previous step
            switching.append(float(t - h + h * xi_prev / (xi_prev - xi)))
        xi_prev = xi
        phi_prev = phi
        if n == grid.size - 1:
            break
        f = lambda tt, yy: ode_rhs(tt, yy, setup, params, phi)
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(float(grid[n + 1]))
        if store:
            traj[n + 1] = y
    return y, grid, traj, phi_samples, tie_mask, switching


def _initial_state(s: ShootingVector, setup: CollocationSetup) -> np.ndarray:
    """Packed initial condition: zero state, adjoint data from ``s``."""
    N = setup.N
    if s.N != N:
        raise ValueError(f"shooting vector sized for N = {s.N}, setup has N = {N}")
    y0 = np.zeros(6 * N + 2)
    for blk in range(3):
        nodal = s.s[blk * N:(blk + 1) * N]
        y0[(3 + blk) * N:(4 + blk) * N] = setup.solve_space_values(nodal)
    y0[6 * N + 1] = s.s[3 * N]
    return y0


def shooting_residual(s: ShootingVector, setup: CollocationSetup,
                      params: ModelParameters, n_steps: int = 400) -> np.ndarray:
    """Terminal-condition mismatch for a trial shooting vector.

    Integrates forward from t = -1 and stacks the nodal terminal values of
    the three adjoint fields with the terminal boundary adjoint.  Returns a
    large-residual sentinel if the integration blows up or hits occlusion,
    so the outer Newton solver can backtrack.
    """
    N = setup.N
    try:
        y0 = _initial_state(s, setup)
        yend, *_ = _integrate_with_control(y0, setup, params, n_steps)
    except (IntegrationError, model.OcclusionError):
        return np.full(3 * N + 1, RESIDUAL_SENTINEL)
    res = np.empty(3 * N + 1)
    for blk in range(3):
        beta = yend[(3 + blk) * N:(4 + blk) * N]
        res[blk * N:(blk + 1) * N] = setup.D0r.T @ beta
    res[3 * N] = yend[6 * N + 1]
    return res


def solve_indirect(setup: CollocationSetup, params: ModelParameters,
                   tol: float = 1e-8, max_iter: int = 50,
                   n_steps: int = 400, jac_step: float = 1e-6,
                   max_damping: int = 20) -> AdjointSolution:
    """Shooting solve of the coupled state/adjoint system.

    Damped Newton with a column-wise finite-difference Jacobian drives the
    terminal residual below ``tol`` in sup-norm; the converged initial data
    is then re-integrated once to record the full trajectories and the
    recovered bang-bang control.  On instability the RK4 step is halved
    once (step count doubled) before giving up.
    """
    N = setup.N
    dim = 3 * N + 1
    s = np.zeros(dim)
    res = shooting_residual(ShootingVector(s), setup, params, n_steps)
    if res[0] >= RESIDUAL_SENTINEL:
        n_steps *= 2
        res = shooting_residual(ShootingVector(s), setup, params, n_steps)
    best_norm = float(np.max(np.abs(res)))
    it = 0
    converged = best_norm < tol
    while not converged and it < max_iter:
        it += 1
        J = np.empty((dim, dim))
        for j in range(dim):
            sp = s.copy()
            sp[j] += jac_step
            rp = shooting_residual(ShootingVector(sp), setup, params, n_steps)
            J[:, j] = (rp - res) / jac_step
        col_norms = np.linalg.norm(J, axis=0)
        bad = np.where(col_norms < 1e-14)[0]
        if bad.size:
            raise SingularJacobianError(bad)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(np.where(col_norms < 1e-10)[0]) from None
        lam = 1.0
        accepted = False
        for _ in range(max_damping + 1):
            trial = s + lam * step
            rt = shooting_residual(ShootingVector(trial), setup, params, n_steps)
            norm_t = float(np.max(np.abs(rt)))
            if norm_t < best_norm:
                s, res, best_norm = trial, rt, norm_t
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        converged = best_norm < tol

    sv = ShootingVector(s)
    y0 = _initial_state(sv, setup)
    yend, grid, traj, phi_samples, tie_mask, switching = _integrate_with_control(
        y0, setup, params, n_steps, store=True)
    return AdjointSolution(
        time_grid=grid,
        alpha_L=traj[:, 0:N], alpha_H=traj[:, N:2 * N], alpha_F=traj[:, 2 * N:3 * N],
        beta_PL=traj[:, 3 * N:4 * N], beta_PH=traj[:, 4 * N:5 * N],
        beta_PF=traj[:, 5 * N:6 * N],
        R=traj[:, 6 * N], P_R=traj[:, 6 * N + 1],
        phi=phi_samples, switching_times=switching, tie_break_samples=tie_mask,
        shooting=sv, residual_norm=best_norm, newton_iterations=it,
        converged=converged, setup=setup)
