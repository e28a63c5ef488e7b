"""Independent oracles and manufactured-solution generators.

Everything here deliberately avoids the production code paths it checks:
the convolution oracle uses trapezoid quadrature on a uniform grid (not the
collocation weights), the gradient check uses central differences of the
objective, and the manufactured problems are built from hand-differentiated
closed-form fields so the discretized operators can be compared against
exact space-time residuals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .grids import Interval1D, SpectralGrid, TimeGrid
from .integrate import IntegratorConfig, solve_adjoint, solve_state
from .model import (
    ControlKind,
    ControlProblem,
    NoFlux,
    SpaceTimeField,
    adjoint_rhs,
    cost,
    state_rhs,
)
from .interaction import Kernel

__all__ = [
    "ManufacturedSolutionError",
    "SmoothField",
    "ManufacturedProblem",
    "GradientCheckReport",
    "brute_convolution",
    "make_manufactured",
    "fd_gradient_check",
    "cosine_field_1d",
    "sine_field_1d",
    "cosine_field_2d",
]


class ManufacturedSolutionError(ValueError):
    """Exact fields do not satisfy the requirements of the construction."""


def brute_convolution(
    kernel: Kernel,
    rho_fn: Callable,
    r,
    intervals: Sequence[Interval1D],
    resolution: int = 2000,
) -> np.ndarray:
    """Trapezoid (1D) or product-trapezoid (2D) evaluation of the kernel
    convolution integral of rho at the point r.

    rho_fn takes the coordinate arrays of the quadrature grid.  This shares
    no code with the collocation assembly, so agreement is evidence.
    """
    if resolution < 1000:
        raise ValueError(f"resolution must be at least 1000, got {resolution}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.shape != (kernel.dim,):
        raise ValueError(f"point has shape {r.shape}, expected ({kernel.dim},)")
    if kernel.dim == 1:
        xs = np.linspace(intervals[0].a, intervals[0].b, resolution + 1)
        vals = rho_fn(xs)[:, None] * kernel.fn(r[None, :], xs[:, None])
        return np.trapezoid(vals, xs, axis=0)
    x1 = np.linspace(intervals[0].a, intervals[0].b, resolution + 1)
    x2 = np.linspace(intervals[1].a, intervals[1].b, resolution + 1)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    pts = np.stack([X1, X2], axis=-1)
    vals = rho_fn(X1, X2)[..., None] * kernel.fn(r[None, None, :], pts)
    inner = np.trapezoid(vals, x2, axis=1)
    return np.trapezoid(inner, x1, axis=0)


@dataclass(frozen=True)
class SmoothField:
    """Closed-form space-time field with hand-written derivatives.

    All callables take (xs, t) with xs the tuple of coordinate arrays;
    grad returns an array of shape (dim, n).
    """

    value: Callable
    dt: Callable
    grad: Callable
    lap: Callable


def cosine_field_1d(a: float, b: float, offset: float = 2.0) -> SmoothField:
    """(a + b*t) * cos(pi*x) + offset; no-flux compatible on (-1, 1)."""
    return SmoothField(
        value=lambda xs, t: (a + b * t) * np.cos(np.pi * xs[0]) + offset,
        dt=lambda xs, t: b * np.cos(np.pi * xs[0]) + 0.0 * xs[0],
        grad=lambda xs, t: np.stack([-(a + b * t) * np.pi * np.sin(np.pi * xs[0])]),
        lap=lambda xs, t: -((np.pi) ** 2) * (a + b * t) * np.cos(np.pi * xs[0]),
    )


def sine_field_1d(a: float, b: float, offset: float = 2.0) -> SmoothField:
    """(a + b*t) * sin(pi*x) + offset; Dirichlet-compatible on (-1, 1)."""
    return SmoothField(
        value=lambda xs, t: (a + b * t) * np.sin(np.pi * xs[0]) + offset,
        dt=lambda xs, t: b * np.sin(np.pi * xs[0]) + 0.0 * xs[0],
        grad=lambda xs, t: np.stack([(a + b * t) * np.pi * np.cos(np.pi * xs[0])]),
        lap=lambda xs, t: -((np.pi) ** 2) * (a + b * t) * np.sin(np.pi * xs[0]),
    )


def cosine_field_2d(a: float, b: float, offset: float = 2.0) -> SmoothField:
    """(a + b*t) * cos(pi*x1) * cos(pi*x2) + offset on (-1, 1)^2."""

    def cc(xs):
        return np.cos(np.pi * xs[0]) * np.cos(np.pi * xs[1])

    return SmoothField(
        value=lambda xs, t: (a + b * t) * cc(xs) + offset,
        dt=lambda xs, t: b * cc(xs),
        grad=lambda xs, t: np.stack(
            [
                -(a + b * t) * np.pi * np.sin(np.pi * xs[0]) * np.cos(np.pi * xs[1]),
                -(a + b * t) * np.pi * np.cos(np.pi * xs[0]) * np.sin(np.pi * xs[1]),
            ]
        ),
        lap=lambda xs, t: -2 * np.pi**2 * (a + b * t) * cc(xs),
    )


@dataclass
class ManufacturedProblem:
    """Control problem whose exact optimality-system solution is known.

    The source f and desired state rho_hat are constructed so that
    (rho_exact, q_exact, w_exact) solve the interaction-free optimality
    system for the chosen control mode and boundary family.
    """

    problem: ControlProblem
    rho_exact: SmoothField
    q_exact: SmoothField
    w_exact: Callable[[float], np.ndarray]
    grid: SpectralGrid
    timegrid: TimeGrid

    def exact_state(self) -> SpaceTimeField:
        xs = self._xs()
        cols = [self.rho_exact.value(xs, t) for t in self.timegrid.times]
        return SpaceTimeField(values=np.column_stack(cols))

    def exact_adjoint(self) -> SpaceTimeField:
        xs = self._xs()
        cols = [self.q_exact.value(xs, t) for t in self.timegrid.times]
        return SpaceTimeField(values=np.column_stack(cols))

    def exact_control(self) -> SpaceTimeField:
        cols = [self.w_exact(t).reshape(-1) for t in self.timegrid.times]
        return SpaceTimeField(values=np.column_stack(cols))

    def state_residual(self, t: float) -> np.ndarray:
        """Discrete state operator applied to the exact fields minus the
        exact time derivative; spectrally small for smooth fields."""
        xs = self._xs()
        rho = self.rho_exact.value(xs, t)
        rhs = state_rhs(self.problem, rho, self.w_exact(t), t)
        return rhs - self.rho_exact.dt(xs, t)

    def adjoint_residual(self, t: float) -> np.ndarray:
        """Discrete reversed-time adjoint rhs at the exact fields minus the
        exact dq/dtau = -dq/dt."""
        xs = self._xs()
        q = self.q_exact.value(xs, t)
        rho = self.rho_exact.value(xs, t)
        rhs = adjoint_rhs(self.problem, q, rho, self.w_exact(t), t)
        return rhs + self.q_exact.dt(xs, t)

    def _xs(self):
        return tuple(self.grid.nodes[:, d] for d in range(self.grid.dim))


def make_manufactured(
    grid: SpectralGrid,
    timegrid: TimeGrid,
    rho_field: SmoothField,
    q_field: SmoothField,
    kind: ControlKind = ControlKind.FLOW,
    bc=NoFlux(),
    beta: float = 1.0,
    v_field: Optional[SmoothField] = None,
) -> ManufacturedProblem:
    """Derive f and rho_hat so the given exact fields solve the kappa = 0
    optimality system.

    The control follows from the gradient equation (w = -rho grad q / beta,
    or -q / beta for source control); the caller must supply fields that are
    smooth, boundary-compatible with bc, and have q(., T) = 0.
    """
    xs = tuple(grid.nodes[:, d] for d in range(grid.dim))
    qT = np.max(np.abs(q_field.value(xs, timegrid.T)))
    if qT > 1e-12:
        raise ManufacturedSolutionError(
            f"q_exact must vanish at the final time, got max |q(T)| = {qT:.3e}"
        )

    def v_grad(t):
        if v_field is None:
            return np.zeros((grid.dim, grid.ndof))
        return v_field.grad(xs, t)

    def v_lap(t):
        if v_field is None:
            return np.zeros(grid.ndof)
        return v_field.lap(xs, t)

    def w_exact(t: float) -> np.ndarray:
        if kind is ControlKind.SOURCE:
            return -q_field.value(xs, t) / beta
        rho = rho_field.value(xs, t)
        return -rho * q_field.grad(xs, t) / beta

    def f_fn(t: float) -> np.ndarray:
        rho = rho_field.value(xs, t)
        grho = rho_field.grad(xs, t)
        gv = v_grad(t)
        out = rho_field.dt(xs, t) - rho_field.lap(xs, t)
        out -= np.sum(grho * gv, axis=0) + rho * v_lap(t)
        if kind is ControlKind.FLOW:
            gq = q_field.grad(xs, t)
            qlap = q_field.lap(xs, t)
            # div(rho * w) with w = -rho grad q / beta
            out -= (2 * rho * np.sum(grho * gq, axis=0) + rho**2 * qlap) / beta
        else:
            out -= w_exact(t)
        return out

    def rho_hat_fn(t: float) -> np.ndarray:
        rho = rho_field.value(xs, t)
        gq = q_field.grad(xs, t)
        out = rho + q_field.dt(xs, t) + q_field.lap(xs, t)
        out -= np.sum(v_grad(t) * gq, axis=0)
        if kind is ControlKind.FLOW:
            out -= rho * np.sum(gq * gq, axis=0) / beta
        return out

    v_ext = None if v_field is None else v_field.value(xs, 0.0)
    problem = ControlProblem(
        grid=grid,
        timegrid=timegrid,
        kind=kind,
        bc=bc,
        kappa=0.0,
        beta=beta,
        rho_hat=rho_hat_fn,
        rho0=rho_field.value(xs, 0.0),
        f=f_fn,
        v_ext=v_ext,
        interaction=None,
    )
    return ManufacturedProblem(
        problem=problem,
        rho_exact=rho_field,
        q_exact=q_field,
        w_exact=w_exact,
        grid=grid,
        timegrid=timegrid,
    )


@dataclass
class GradientCheckReport:
    """Central-difference vs adjoint directional derivatives over an h-sweep."""

    hs: tuple[float, ...]
    fd_values: tuple[float, ...]
    adjoint_value: float
    best_h: float
    best_rel_err: float


def fd_gradient_check(
    prob: ControlProblem,
    W,
    direction,
    hs: Sequence[float] = (1e-3, 1e-4, 1e-5),
    icfg: IntegratorConfig = IntegratorConfig(),
) -> GradientCheckReport:
    """Compare the adjoint-based objective gradient against central
    differences of the reduced objective along one direction.

    The h-sweep protects the check from the truncation/round-off trade-off;
    the report keeps the best-agreeing h.
    """
    Wv = W.values if isinstance(W, SpaceTimeField) else np.asarray(W, dtype=float)
    V = (
        direction.values
        if isinstance(direction, SpaceTimeField)
        else np.asarray(direction, dtype=float)
    )
    if V.shape != Wv.shape:
        raise ValueError(f"direction shape {V.shape} != control shape {Wv.shape}")

    def reduced(Wc):
        return cost(prob, solve_state(prob, Wc, icfg), Wc)

    P = solve_state(prob, Wv, icfg)
    Q = solve_adjoint(prob, P, Wv, icfg)
    if prob.kind is ControlKind.SOURCE:
        grad = prob.beta * Wv + Q.values
    else:
        parts = [
            prob.beta * Wv[d * prob.ndof : (d + 1) * prob.ndof]
            + P.values * prob.grid.d1_matmul(d, Q.values)
            for d in range(prob.dim)
        ]
        grad = np.vstack(parts)

    ncomp = Wv.shape[0] // prob.ndof
    n_times = prob.timegrid.n + 1
    inner = (grad * V).reshape(ncomp, prob.ndof, n_times).sum(axis=0)
    adjoint_value = float(prob.timegrid.quad_weights @ (prob.grid.quad_weights @ inner))

    fd_values = []
    for h in hs:
        fd_values.append((reduced(Wv + h * V) - reduced(Wv - h * V)) / (2 * h))
    scale = max(abs(adjoint_value), 1e-14)
    rel = [abs(fd - adjoint_value) / scale for fd in fd_values]
    best = int(np.argmin(rel))
    return GradientCheckReport(
        hs=tuple(hs),
        fd_values=tuple(fd_values),
        adjoint_value=adjoint_value,
        best_h=float(hs[best]),
        best_rel_err=float(rel[best]),
    )
