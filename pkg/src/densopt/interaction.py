"""Non-local particle interaction operator and its adjoint pairing term.

The convolution against the kernel K(r, r') is stored as dense per-component
quadrature matrices so that every application is a single matrix-vector
product, reusing the grid's Clenshaw-Curtis weights as the quadrature rule.
Matrices are assembled once per grid/kernel pair and shared across all time
steps and optimization sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .grids import SpectralGrid

__all__ = [
    "Kernel",
    "InteractionOperator",
    "gaussian_gradient_kernel",
    "assemble",
    "interaction_flux",
    "interaction_divergence",
    "adjoint_interaction",
    "adjoint_interaction_odd",
]


@dataclass(frozen=True)
class Kernel:
    """Vector-valued two-point kernel.

    ``fn(r, rp)`` must broadcast over leading axes of the (..., dim)
    coordinate arrays and return the (..., dim) kernel components.
    ``is_odd`` declares K(r, r') = -K(r', r); it is verified at assembly.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim: int
    is_odd: bool = False


def gaussian_gradient_kernel(dim: int) -> Kernel:
    """K(r, r') = grad_r exp(-|r - r'|^2), the odd kernel of the Gaussian pair
    potential.  Positive coupling strength is repulsive."""

    def fn(r, rp):
        d = r - rp
        return -2.0 * d * np.exp(-np.sum(d * d, axis=-1, keepdims=True))

    return Kernel(fn=fn, dim=dim, is_odd=True)


@dataclass
class InteractionOperator:
    """Precomputed convolution matrices for one grid/kernel pair.

    C[d][i, j] = w_j * K_d(x_i, x_j) applies the kernel with the field at
    the second argument; C_rev[d][i, j] = w_j * K_d(x_j, x_i) applies it
    with the arguments swapped (needed by the adjoint pairing term).
    Immutable after assembly; applications are read-only.
    """

    kappa: float
    C: tuple[np.ndarray, ...]
    C_rev: tuple[np.ndarray, ...]
    kernel: Kernel

    @property
    def ndof(self) -> int:
        return self.C[0].shape[0]

    @property
    def dim(self) -> int:
        return len(self.C)

    def with_kappa(self, kappa: float) -> "InteractionOperator":
        """Same matrices, different coupling strength."""
        return replace(self, kappa=float(kappa))


def assemble(grid: SpectralGrid, kernel: Kernel, kappa: float) -> InteractionOperator:
    """Build the dense quadrature matrices for the kernel on this grid.

    Raises on dimension mismatch, on non-finite kernel samples (singular
    kernels are not supported), and on a declared-odd kernel that fails
    antisymmetry at the node pairs.
    """
    if kernel.dim != grid.dim:
        raise ValueError(f"kernel dim {kernel.dim} != grid dim {grid.dim}")
    r_i = grid.nodes[:, None, :]
    r_j = grid.nodes[None, :, :]
    K = np.asarray(kernel.fn(r_i, r_j), dtype=float)
    if K.shape != (grid.ndof, grid.ndof, grid.dim):
        raise ValueError(f"kernel returned shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise ValueError("kernel has non-finite entries at node pairs (singular?)")
    K_swap = np.asarray(kernel.fn(r_j, r_i), dtype=float)
    if kernel.is_odd:
        skew = np.max(np.abs(K + K_swap))
        if skew > 1e-12 * max(1.0, np.max(np.abs(K))):
            raise ValueError(f"kernel declared odd but antisymmetry defect is {skew:.2e}")
    w = grid.quad_weights
    C = tuple(K[:, :, d] * w[None, :] for d in range(grid.dim))
    C_rev = tuple(K_swap[:, :, d] * w[None, :] for d in range(grid.dim))
    return InteractionOperator(kappa=float(kappa), C=C, C_rev=C_rev, kernel=kernel)


def _check_field(op: InteractionOperator, v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (op.ndof,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({op.ndof},)")
    return v


def interaction_flux(op: InteractionOperator, rho: np.ndarray) -> np.ndarray:
    """kappa * rho(r) * convolution(rho), shape (dim, ndof).

    The density at the evaluation point multiplies pointwise outside the
    integral.
    """
    rho = _check_field(op, rho, "rho")
    if op.kappa == 0.0:
        return np.zeros((op.dim, op.ndof))
    return np.stack([op.kappa * rho * (op.C[d] @ rho) for d in range(op.dim)])


def interaction_divergence(
    op: InteractionOperator, grid: SpectralGrid, rho: np.ndarray
) -> np.ndarray:
    """Divergence of the interaction flux via the grid derivative operators."""
    if grid.ndof != op.ndof:
        raise ValueError("operator was assembled on a different grid")
    flux = interaction_flux(op, rho)
    out = grid.deriv(flux[0], 0)
    for d in range(1, op.dim):
        out = out + grid.deriv(flux[d], d)
    return out


def adjoint_interaction(
    op: InteractionOperator, grid: SpectralGrid, rho: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Adjoint pairing term: kappa [conv(rho) . grad q](r)
    + kappa * integral of rho(r') K(r', r) . grad q(r') dr'.

    General two-term form, valid for any kernel.
    """
    rho = _check_field(op, rho, "rho")
    q = _check_field(op, q, "q")
    if grid.ndof != op.ndof:
        raise ValueError("operator was assembled on a different grid")
    if op.kappa == 0.0:
        return np.zeros(op.ndof)
    out = np.zeros(op.ndof)
    for d in range(op.dim):
        gq = grid.deriv(q, d)
        out += (op.C[d] @ rho) * gq + op.C_rev[d] @ (rho * gq)
    return op.kappa * out


def adjoint_interaction_odd(
    op: InteractionOperator, grid: SpectralGrid, rho: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Single-integral form of the adjoint pairing term for odd kernels:
    kappa * integral of rho(r') K(r, r') . [grad q(r) - grad q(r')] dr'."""
    rho = _check_field(op, rho, "rho")
    q = _check_field(op, q, "q")
    if not op.kernel.is_odd:
        raise ValueError("single-integral form requires an odd kernel")
    if op.kappa == 0.0:
        return np.zeros(op.ndof)
    out = np.zeros(op.ndof)
    for d in range(op.dim):
        gq = grid.deriv(q, d)
        out += (op.C[d] @ rho) * gq - op.C[d] @ (rho * gq)
    return op.kappa * out
