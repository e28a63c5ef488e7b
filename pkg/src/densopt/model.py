"""Control problem definition and spatially discretized optimality-system
operators.

Covers both control modes (advective flow field and additive source) and both
boundary families (constant Dirichlet and no-flux with the non-local
contribution included in the flux).  The state right-hand side is written in
divergence form, D1 applied to the total flux, so the interior equations and
the no-flux rows share one flux expression and mass is conserved to solver
accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from .grids import SpectralGrid, TimeGrid
from .interaction import InteractionOperator, interaction_flux, adjoint_interaction

__all__ = [
    "ControlKind",
    "Dirichlet",
    "NoFlux",
    "BoundaryKind",
    "ControlProblem",
    "SpaceTimeField",
    "NumericalBlowupError",
    "state_rhs",
    "state_flux",
    "state_boundary_residual",
    "adjoint_rhs",
    "adjoint_boundary_residual",
    "gradient_update",
    "cost",
    "field_on_grid",
]


class NumericalBlowupError(ArithmeticError):
    """A field handed to the model contains non-finite values."""


class ControlKind(Enum):
    FLOW = "flow"
    SOURCE = "source"


@dataclass(frozen=True)
class Dirichlet:
    """State held at the constant c on the boundary."""

    c: float = 0.0


@dataclass(frozen=True)
class NoFlux:
    """Vanishing total normal flux, including the non-local term."""


BoundaryKind = Union[Dirichlet, NoFlux]


@dataclass
class SpaceTimeField:
    """Nodal values of a field at every Chebyshev time node.

    Rows are spatial DOFs (stacked per component for vector controls),
    column k belongs to timegrid.times[k].
    """

    values: np.ndarray

    @classmethod
    def zeros(cls, rows: int, n_steps: int) -> "SpaceTimeField":
        return cls(values=np.zeros((rows, n_steps + 1)))

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def copy(self) -> "SpaceTimeField":
        return SpaceTimeField(values=self.values.copy())


def field_on_grid(grid: SpectralGrid, fn: Callable) -> Callable[[float], np.ndarray]:
    """Adapt fn(x, t) or fn(x1, x2, t) into a nodal evaluator t -> (ndof,)."""
    coords = tuple(grid.nodes[:, d] for d in range(grid.dim))

    def evaluator(t: float) -> np.ndarray:
        return np.broadcast_to(
            np.asarray(fn(*coords, t), dtype=float), (grid.ndof,)
        ).copy()

    return evaluator


@dataclass
class ControlProblem:
    """Full definition of one optimal control problem.

    rho_hat and f are evaluators t -> nodal vector (f may be None for zero);
    v_ext is a static nodal vector, None for zero, or an evaluator for
    time-dependent potentials.  Immutable after construction; the rhs and
    residual functions below are pure.
    """

    grid: SpectralGrid
    timegrid: TimeGrid
    kind: ControlKind
    bc: BoundaryKind
    kappa: float
    beta: float
    rho_hat: Callable[[float], np.ndarray]
    rho0: np.ndarray
    f: Optional[Callable[[float], np.ndarray]] = None
    v_ext: Union[np.ndarray, Callable[[float], np.ndarray], None] = None
    interaction: Optional[InteractionOperator] = None
    initial_mass: float = field(init=False, default=np.nan)
    _v_static: Optional[np.ndarray] = field(init=False, default=None, repr=False)
    _v_grad_static: Optional[np.ndarray] = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        self.rho0 = np.asarray(self.rho0, dtype=float)
        if self.rho0.shape != (self.grid.ndof,):
            raise ValueError(
                f"rho0 has shape {self.rho0.shape}, expected ({self.grid.ndof},)"
            )
        if self.interaction is None:
            if self.kappa != 0.0:
                raise ValueError("kappa != 0 requires an interaction operator")
        else:
            if self.interaction.ndof != self.grid.ndof:
                raise ValueError("interaction operator does not match the grid")
            if self.interaction.kappa != self.kappa:
                raise ValueError(
                    f"kappa mismatch: problem {self.kappa}, "
                    f"operator {self.interaction.kappa}"
                )
        if self.v_ext is not None and not callable(self.v_ext):
            v = np.asarray(self.v_ext, dtype=float)
            if v.shape != (self.grid.ndof,):
                raise ValueError(
                    f"v_ext has shape {v.shape}, expected ({self.grid.ndof},)"
                )
            self._v_static = v
            self._v_grad_static = self.grid.grad(v)
        elif self.v_ext is None:
            self._v_static = np.zeros(self.grid.ndof)
            self._v_grad_static = np.zeros((self.grid.dim, self.grid.ndof))
        if isinstance(self.bc, NoFlux) and self.f is None:
            self.initial_mass = float(self.grid.quad_weights @ self.rho0)

    @property
    def ndof(self) -> int:
        return self.grid.ndof

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def control_shape(self) -> tuple[int, ...]:
        if self.kind is ControlKind.FLOW:
            return (self.grid.dim, self.grid.ndof)
        return (self.grid.ndof,)

    @property
    def control_rows(self) -> int:
        return int(np.prod(self.control_shape))

    def v_grad(self, t: float) -> np.ndarray:
        """Gradient of the external potential at time t, shape (dim, ndof)."""
        if self._v_grad_static is not None:
            return self._v_grad_static
        return self.grid.grad(np.asarray(self.v_ext(t), dtype=float))

    def source_term(self, t: float) -> Optional[np.ndarray]:
        if self.f is None:
            return None
        return np.asarray(self.f(t), dtype=float)

    def variant(self, kappa: Optional[float] = None, beta: Optional[float] = None):
        """Copy sharing grids and matrices, with new coupling or regularization."""
        kappa = self.kappa if kappa is None else float(kappa)
        beta = self.beta if beta is None else float(beta)
        op = self.interaction
        if op is not None:
            op = op.with_kappa(kappa)
        elif kappa != 0.0:
            raise ValueError("cannot set kappa != 0 without an interaction operator")
        return replace(self, kappa=kappa, beta=beta, interaction=op)


def _check_control(prob: ControlProblem, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != prob.control_shape:
        raise ValueError(f"control has shape {w.shape}, expected {prob.control_shape}")
    return w


def _check_scalar(prob: ControlProblem, v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (prob.ndof,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({prob.ndof},)")
    if not np.all(np.isfinite(v)):
        raise NumericalBlowupError(f"{name} contains non-finite values")
    return v


def state_flux(
    prob: ControlProblem, rho: np.ndarray, w: np.ndarray, t: float
) -> np.ndarray:
    """Total flux whose divergence drives the state, shape (dim, ndof).

    Per component: grad rho - rho*w (flow control only) + rho*grad V_ext
    + interaction flux.
    """
    rho = _check_scalar(prob, rho, "rho")
    w = _check_control(prob, w)
    vgrad = prob.v_grad(t)
    flux = np.empty((prob.dim, prob.ndof))
    for d in range(prob.dim):
        flux[d] = prob.grid.deriv(rho, d) + rho * vgrad[d]
    if prob.kind is ControlKind.FLOW:
        flux -= rho * w
    if prob.interaction is not None and prob.kappa != 0.0:
        flux += interaction_flux(prob.interaction, rho)
    return flux


def state_rhs(
    prob: ControlProblem, rho: np.ndarray, w: np.ndarray, t: float
) -> np.ndarray:
    """Time derivative of the state at every node (boundary rows are later
    replaced by algebraic residuals in the DAE assembly)."""
    flux = state_flux(prob, rho, w, t)
    out = prob.grid.deriv(flux[0], 0)
    for d in range(1, prob.dim):
        out = out + prob.grid.deriv(flux[d], d)
    if prob.kind is ControlKind.SOURCE:
        out = out + w
    f = prob.source_term(t)
    if f is not None:
        out = out + f
    return out


def state_boundary_residual(
    prob: ControlProblem, rho: np.ndarray, w: np.ndarray, t: float
) -> np.ndarray:
    """Boundary condition residual per boundary node (zero when satisfied)."""
    if isinstance(prob.bc, Dirichlet):
        rho = _check_scalar(prob, rho, "rho")
        return rho[prob.grid.boundary_idx] - prob.bc.c
    flux = state_flux(prob, rho, w, t)
    bidx = prob.grid.boundary_idx
    return np.einsum("bd,db->b", prob.grid.normals, flux[:, bidx])


def adjoint_rhs(
    prob: ControlProblem,
    q: np.ndarray,
    rho: np.ndarray,
    w: np.ndarray,
    t: float,
) -> np.ndarray:
    """Reversed-time adjoint right-hand side at physical time t.

    With tau = T - t the adjoint is a well-posed initial value problem from
    q(tau=0) = 0:

        dq/dtau = lap q + w . grad q - grad V_ext . grad q
                  - adjoint_interaction(rho, q) + (rho - rho_hat)

    (the advection term is absent for source control).
    """
    q = _check_scalar(prob, q, "q")
    rho = _check_scalar(prob, rho, "rho")
    w = _check_control(prob, w)
    grid = prob.grid
    vgrad = prob.v_grad(t)
    out = np.zeros(prob.ndof)
    for d in range(prob.dim):
        gq = grid.deriv(q, d)
        out += grid.deriv(gq, d)
        if prob.kind is ControlKind.FLOW:
            out += (w[d] - vgrad[d]) * gq
        else:
            out -= vgrad[d] * gq
    if prob.interaction is not None and prob.kappa != 0.0:
        out -= adjoint_interaction(prob.interaction, grid, rho, q)
    out += rho - np.asarray(prob.rho_hat(t), dtype=float)
    return out


def adjoint_boundary_residual(prob: ControlProblem, q: np.ndarray) -> np.ndarray:
    """Adjoint boundary residual: q itself (Dirichlet state) or dq/dn
    (no-flux state); local in both cases."""
    q = _check_scalar(prob, q, "q")
    bidx = prob.grid.boundary_idx
    if isinstance(prob.bc, Dirichlet):
        return q[bidx]
    gq = np.stack([prob.grid.deriv(q, d) for d in range(prob.dim)])
    return np.einsum("bd,db->b", prob.grid.normals, gq[:, bidx])


def gradient_update(
    prob: ControlProblem, rho: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Control solving the gradient equation at one time instant:
    beta*w + rho*grad q = 0 (flow) or beta*w + q = 0 (source)."""
    if prob.beta <= 0:
        raise ValueError(f"beta must be positive, got {prob.beta}")
    q = _check_scalar(prob, q, "q")
    if prob.kind is ControlKind.SOURCE:
        return -q / prob.beta
    rho = _check_scalar(prob, rho, "rho")
    return np.stack(
        [-rho * prob.grid.deriv(q, d) / prob.beta for d in range(prob.dim)]
    )


def cost(prob: ControlProblem, P, W) -> float:
    """Tracking-plus-regularization objective by Clenshaw-Curtis quadrature
    in space (per time node) and in time over the horizon."""
    P = P.values if isinstance(P, SpaceTimeField) else np.asarray(P, dtype=float)
    W = W.values if isinstance(W, SpaceTimeField) else np.asarray(W, dtype=float)
    n_times = prob.timegrid.n + 1
    if P.shape != (prob.ndof, n_times):
        raise ValueError(f"state has shape {P.shape}, expected {(prob.ndof, n_times)}")
    if W.shape != (prob.control_rows, n_times):
        raise ValueError(
            f"control has shape {W.shape}, expected {(prob.control_rows, n_times)}"
        )
    wq = prob.grid.quad_weights
    wt = prob.timegrid.quad_weights
    misfit = np.empty(n_times)
    for k, t in enumerate(prob.timegrid.times):
        diff = P[:, k] - np.asarray(prob.rho_hat(t), dtype=float)
        misfit[k] = wq @ (diff * diff)
    ncomp = prob.control_rows // prob.ndof
    w_sq = (W * W).reshape(ncomp, prob.ndof, n_times).sum(axis=0)
    penalty = wq @ w_sq
    return float(0.5 * (wt @ misfit) + 0.5 * prob.beta * (wt @ penalty))
