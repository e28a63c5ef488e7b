"""State and adjoint solves as boundary-bordered differential-algebraic
systems.

The spatially discretized PDE evolves the interior rows while the boundary
rows are replaced by algebraic residuals, and the combined system is handed
to the stiff DAE integrator.  The adjoint is integrated forward in the
reversed time tau = T - t from its zero terminal value, with the state and
control evaluated at integrator-internal times by barycentric interpolation
across the stored Chebyshev time columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import model
from .dae import DivergedSolveError, integrate_dae
from .grids import TimeGrid
from .model import ControlKind, ControlProblem, Dirichlet, SpaceTimeField

__all__ = [
    "IntegratorConfig",
    "DaeSystem",
    "DivergedSolveError",
    "build_state_system",
    "build_adjoint_system",
    "solve_state",
    "solve_adjoint",
    "evaluate_trajectory",
]

logger = logging.getLogger("densopt.integrate")


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances for the stiff DAE solver."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    max_step: float = np.inf

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass
class DaeSystem:
    """Assembled DAE: combined rhs plus the differential/algebraic split.

    rhs(y, t) evaluates the interior PDE rows and overwrites the rows in
    algebraic_idx with boundary residuals; jac is its analytic Jacobian
    (None falls back to forward differences inside the integrator).
    """

    dof_count: int
    differential_idx: np.ndarray
    algebraic_idx: np.ndarray
    rhs: Callable[[np.ndarray, float], np.ndarray]
    jac: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    control_sampler: Optional[Callable[[float], np.ndarray]] = None

    @property
    def diff_mask(self) -> np.ndarray:
        mask = np.ones(self.dof_count, dtype=bool)
        mask[self.algebraic_idx] = False
        return mask


def _field_sampler(values: np.ndarray, timegrid: TimeGrid, shape=None):
    """t -> column of a space-time array by barycentric time interpolation."""

    def sample(t: float) -> np.ndarray:
        col = values @ timegrid.interp_weights(t)
        return col if shape is None else col.reshape(shape)

    return sample


def _control_values(prob: ControlProblem, W) -> np.ndarray:
    W = W.values if isinstance(W, SpaceTimeField) else np.asarray(W, dtype=float)
    want = (prob.control_rows, prob.timegrid.n + 1)
    if W.shape != want:
        raise ValueError(f"control trajectory has shape {W.shape}, expected {want}")
    return W


def _state_jacobian(prob: ControlProblem, w_of_t) -> Callable:
    """Analytic Jacobian of the combined state DAE rhs.

    Interior rows: sum_d D1_d @ dflux_d/drho with
    dflux_d = D1_d + diag(-w_d + dV/dx_d + kappa*(C_d rho)) + kappa*diag(rho)*C_d;
    boundary rows are the residual Jacobians (normal-projected flux rows for
    no-flux, unit rows for Dirichlet).
    """
    grid = prob.grid
    bidx = grid.boundary_idx
    op = prob.interaction if prob.kappa != 0.0 else None
    dirichlet = isinstance(prob.bc, Dirichlet)

    def jac(rho: np.ndarray, t: float) -> np.ndarray:
        vgrad = prob.v_grad(t)
        w = w_of_t(t)
        J = np.zeros((grid.ndof, grid.ndof))
        brows = np.zeros((bidx.size, grid.ndof))
        for d in range(grid.dim):
            diag = vgrad[d].copy()
            if prob.kind is ControlKind.FLOW:
                diag -= w[d]
            dflux = grid.D1[d].copy()
            if op is not None:
                diag += op.kappa * (op.C[d] @ rho)
                dflux += op.kappa * rho[:, None] * op.C[d]
            dflux.flat[:: grid.ndof + 1] += diag
            J += grid.d1_matmul(d, dflux)
            if not dirichlet:
                brows += grid.normals[:, d, None] * dflux[bidx]
        if dirichlet:
            J[bidx] = 0.0
            J[bidx, bidx] = 1.0
        else:
            J[bidx] = brows
        return J

    return jac


def _adjoint_jacobian(prob: ControlProblem, rho_of_t, w_of_t) -> Callable:
    """Analytic Jacobian of the reversed-time adjoint rhs (linear in q)."""
    grid = prob.grid
    bidx = grid.boundary_idx
    op = prob.interaction if prob.kappa != 0.0 else None
    dirichlet = isinstance(prob.bc, Dirichlet)
    lap = grid.laplacian

    def jac(q: np.ndarray, tau: float) -> np.ndarray:
        t = prob.timegrid.T - tau
        vgrad = prob.v_grad(t)
        w = w_of_t(t) if prob.kind is ControlKind.FLOW else None
        rho = rho_of_t(t)
        J = lap.copy()
        for d in range(grid.dim):
            adv = -vgrad[d].copy()
            if w is not None:
                adv += w[d]
            if op is not None:
                adv -= op.kappa * (op.C[d] @ rho)
                J -= grid.matmul_d1(op.kappa * (op.C_rev[d] * rho[None, :]), d)
            J += adv[:, None] * grid.D1[d]
        if dirichlet:
            J[bidx] = 0.0
            J[bidx, bidx] = 1.0
        else:
            J[bidx] = 0.0
            for d in range(grid.dim):
                J[bidx] += grid.normals[:, d, None] * grid.D1[d][bidx]
        return J

    return jac


def build_state_system(prob: ControlProblem, W) -> DaeSystem:
    """Boundary-bordered DAE for the forward equation under the control W."""
    Wv = _control_values(prob, W)
    sampler = _field_sampler(Wv, prob.timegrid, shape=prob.control_shape)
    bidx = prob.grid.boundary_idx

    def rhs(y: np.ndarray, t: float) -> np.ndarray:
        w = sampler(t)
        out = model.state_rhs(prob, y, w, t)
        out[bidx] = model.state_boundary_residual(prob, y, w, t)
        return out

    return DaeSystem(
        dof_count=prob.ndof,
        differential_idx=prob.grid.interior_idx,
        algebraic_idx=bidx,
        rhs=rhs,
        jac=_state_jacobian(prob, sampler),
        control_sampler=sampler,
    )


def build_adjoint_system(prob: ControlProblem, P, W) -> DaeSystem:
    """Reversed-time DAE for the adjoint, driven by the solved state."""
    Pv = P.values if isinstance(P, SpaceTimeField) else np.asarray(P, dtype=float)
    if Pv.shape != (prob.ndof, prob.timegrid.n + 1):
        raise ValueError(f"state trajectory has shape {Pv.shape}")
    Wv = _control_values(prob, W)
    sample_rho = _field_sampler(Pv, prob.timegrid)
    sample_w = _field_sampler(Wv, prob.timegrid, shape=prob.control_shape)
    bidx = prob.grid.boundary_idx
    T = prob.timegrid.T

    def rhs(q: np.ndarray, tau: float) -> np.ndarray:
        t = T - tau
        rho = sample_rho(t)
        w = sample_w(t)
        out = model.adjoint_rhs(prob, q, rho, w, t)
        out[bidx] = model.adjoint_boundary_residual(prob, q)
        return out

    return DaeSystem(
        dof_count=prob.ndof,
        differential_idx=prob.grid.interior_idx,
        algebraic_idx=bidx,
        rhs=rhs,
        jac=_adjoint_jacobian(prob, sample_rho, sample_w),
        control_sampler=sample_w,
    )


def _project_initial_state(prob: ControlProblem, system: DaeSystem, tol: float):
    """Move boundary values of rho0 onto the constraint manifold.

    DAE integration needs consistent initial data; only the boundary rows
    are adjusted, by a Newton iteration on the algebraic residuals.
    """
    y = prob.rho0.copy()
    bidx = system.algebraic_idx
    res = system.rhs(y, 0.0)[bidx]
    if np.max(np.abs(res)) <= tol:
        return y
    logger.warning(
        "initial condition violates the boundary condition (residual %.3e); "
        "projecting boundary values before integration",
        np.max(np.abs(res)),
    )
    for _ in range(25):
        J = system.jac(y, 0.0)
        Jb = J[np.ix_(bidx, bidx)]
        y[bidx] -= np.linalg.solve(Jb, res)
        res = system.rhs(y, 0.0)[bidx]
        if np.max(np.abs(res)) <= 1e-12 * max(1.0, np.max(np.abs(y))):
            break
    else:
        raise DivergedSolveError("could not project initial data onto the BC", 0.0)
    return y


def solve_state(
    prob: ControlProblem, W, cfg: IntegratorConfig = IntegratorConfig()
) -> SpaceTimeField:
    """Integrate the forward equation; columns at the Chebyshev time nodes.

    Column 0 is rho0 as given.  If rho0 violates the boundary condition the
    integration starts from a boundary-projected copy (logged warning).
    """
    system = build_state_system(prob, W)
    y0 = _project_initial_state(prob, system, tol=10 * cfg.abs_tol)
    times = prob.timegrid.times
    out = np.empty((prob.ndof, times.size))
    out[:, 0] = prob.rho0
    cols, _ = integrate_dae(
        system.rhs,
        y0,
        0.0,
        prob.timegrid.T,
        times[1:],
        system.diff_mask,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        jac=system.jac,
    )
    out[:, 1:] = cols
    return SpaceTimeField(values=out)


def solve_adjoint(
    prob: ControlProblem, P, W, cfg: IntegratorConfig = IntegratorConfig()
) -> SpaceTimeField:
    """Integrate the adjoint in reversed time from q(T) = 0.

    The returned columns are indexed by physical time: the final column is
    exactly zero.
    """
    system = build_adjoint_system(prob, P, W)
    T = prob.timegrid.T
    times = prob.timegrid.times
    taus = (T - times)[::-1]
    out = np.empty((prob.ndof, times.size))
    out[:, -1] = 0.0
    cols, _ = integrate_dae(
        system.rhs,
        np.zeros(prob.ndof),
        0.0,
        T,
        taus[1:],
        system.diff_mask,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        jac=system.jac,
    )
    # tau column j (j >= 1) corresponds to physical time node n - j.
    n = times.size - 1
    for j in range(1, times.size):
        out[:, n - j] = cols[:, j - 1]
    return SpaceTimeField(values=out)


def evaluate_trajectory(F, timegrid: TimeGrid, t: float) -> np.ndarray:
    """Barycentric interpolation of a space-time field across its columns;
    exact at stored time nodes."""
    values = F.values if isinstance(F, SpaceTimeField) else np.asarray(F, dtype=float)
    if values.shape[1] != timegrid.n + 1:
        raise ValueError(
            f"trajectory has {values.shape[1]} columns, expected {timegrid.n + 1}"
        )
    return values @ timegrid.interp_weights(t)
