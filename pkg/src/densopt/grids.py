"""Chebyshev collocation grids on mapped intervals and boxes.

Nodes are Chebyshev extrema (Gauss-Lobatto points), so the domain boundary is
part of the grid and boundary conditions can be imposed as algebraic rows.
Differentiation matrices use the barycentric form, integration uses
Clenshaw-Curtis weights, and off-node evaluation uses barycentric Lagrange
interpolation.

Node ordering for 2D tensor grids is dimension-1-fastest row-major:
``k = i2 * N1 + i1``.  All lifted operators and field vectors follow it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridResolutionError",
    "ExtrapolationError",
    "Interval1D",
    "SpectralGrid",
    "TimeGrid",
    "build_grid_1d",
    "build_grid_2d",
    "build_time_grid",
    "barycentric_interp",
    "quadrature",
    "chebyshev_extrema",
    "barycentric_weights",
    "differentiation_matrix",
    "clenshaw_curtis_weights",
]


class GridResolutionError(ValueError):
    """Too few collocation points for a usable spectral grid."""


class ExtrapolationError(ValueError):
    """Query point outside the closed domain of the interpolant."""


@dataclass(frozen=True)
class Interval1D:
    """Interval (a, b) with a < b."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval requires a < b, got ({self.a}, {self.b})")

    @property
    def length(self) -> float:
        return self.b - self.a


def chebyshev_extrema(n: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """n Chebyshev-Gauss-Lobatto points on [a, b], ascending.

    Endpoints are exact; interior points are symmetric about the midpoint
    (sine form avoids the cos round-off asymmetry).
    """
    if n < 2:
        raise GridResolutionError(f"need at least 2 points, got {n}")
    m = n - 1
    j = np.arange(n)
    ref = np.sin(0.5 * np.pi * (2 * j - m) / m)
    x = 0.5 * (a + b) + 0.5 * (b - a) * ref
    x[0] = a
    x[-1] = b
    return x


def barycentric_weights(n: int) -> np.ndarray:
    """Barycentric weights for Chebyshev extrema: (-1)^j, halved at the ends."""
    w = np.ones(n)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def differentiation_matrix(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """First-derivative collocation matrix from nodes and barycentric weights.

    Off-diagonal entries D_ij = (w_j / w_i) / (x_i - x_j); diagonal by the
    negative-sum trick so constants are annihilated to round-off.
    """
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def clenshaw_curtis_weights(n: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """Clenshaw-Curtis quadrature weights for n Chebyshev extrema on [a, b].

    Exact for polynomials of degree <= n - 1; all weights strictly positive.
    """
    m = n - 1
    if m < 1:
        raise GridResolutionError(f"need at least 2 points, got {n}")
    theta = np.pi * np.arange(1, m) / m
    w = np.empty(n)
    v = np.ones(m - 1)
    if m % 2 == 0:
        w[0] = w[m] = 1.0 / (m * m - 1)
        for k in range(1, m // 2):
            v -= 2.0 * np.cos(2.0 * k * theta) / (4 * k * k - 1)
        v -= np.cos(m * theta) / (m * m - 1)
    else:
        w[0] = w[m] = 1.0 / (m * m)
        for k in range(1, (m - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / m
    return 0.5 * (b - a) * w


@dataclass
class SpectralGrid:
    """Collocation grid on an interval or a tensor-product box.

    Treat as immutable after construction; instances are shared freely
    across solves.

    Attributes
    ----------
    dim : 1 or 2
    points_per_dim : per-dimension point counts (N1,) or (N1, N2)
    nodes : (ndof, dim) node coordinates, dimension-1-fastest ordering
    D1, D2 : per-dimension derivative operators lifted to the full grid
    quad_weights : Clenshaw-Curtis weights on the full grid
    boundary_idx : indices of nodes on the domain boundary
    normals : (len(boundary_idx), dim) outward unit normals; 2D corner
        nodes carry the normal of their lower-dimension edge
    """

    dim: int
    points_per_dim: tuple[int, ...]
    intervals: tuple[Interval1D, ...]
    nodes: np.ndarray
    D1: tuple[np.ndarray, ...]
    D2: tuple[np.ndarray, ...]
    quad_weights: np.ndarray
    boundary_idx: np.ndarray
    normals: np.ndarray
    axis_nodes: tuple[np.ndarray, ...] = field(repr=False, default=())
    axis_D1: tuple[np.ndarray, ...] = field(repr=False, default=())
    axis_bary: tuple[np.ndarray, ...] = field(repr=False, default=())

    @property
    def ndof(self) -> int:
        return self.nodes.shape[0]

    @property
    def interior_idx(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.boundary_idx] = False
        return np.nonzero(mask)[0]

    @property
    def laplacian(self) -> np.ndarray:
        lap = self.D2[0]
        for d in range(1, self.dim):
            lap = lap + self.D2[d]
        return lap

    def deriv(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Apply the lifted first-derivative operator along one dimension.

        Uses the tensor-product factorization, so a 2D derivative costs two
        small matrix products instead of an (ndof x ndof) matvec.
        """
        if self.dim == 1:
            return self.axis_D1[0] @ values
        n1, n2 = self.points_per_dim
        v2 = values.reshape(n2, n1)
        if axis == 0:
            return (v2 @ self.axis_D1[0].T).ravel()
        return (self.axis_D1[1] @ v2).ravel()

    def grad(self, values: np.ndarray) -> np.ndarray:
        """Gradient of a scalar nodal field, shape (dim, ndof)."""
        return np.stack([self.deriv(values, d) for d in range(self.dim)])

    def d1_matmul(self, axis: int, mat: np.ndarray) -> np.ndarray:
        """Compute D1[axis] @ mat through the tensor-product factors."""
        if self.dim == 1:
            return self.axis_D1[0] @ mat
        n1, n2 = self.points_per_dim
        m = mat.shape[1]
        if axis == 0:
            blocks = self.axis_D1[0][None, :, :] @ mat.reshape(n2, n1, m)
            return blocks.reshape(n1 * n2, m)
        return (self.axis_D1[1] @ mat.reshape(n2, n1 * m)).reshape(n1 * n2, m)

    def matmul_d1(self, mat: np.ndarray, axis: int) -> np.ndarray:
        """Compute mat @ D1[axis] through the tensor-product factors."""
        if self.dim == 1:
            return mat @ self.axis_D1[0]
        n1, n2 = self.points_per_dim
        m = mat.shape[0]
        m3 = mat.reshape(m, n2, n1)
        if axis == 0:
            return (m3 @ self.axis_D1[0]).reshape(m, n1 * n2)
        out = np.tensordot(m3, self.axis_D1[1], axes=([1], [0]))
        return np.ascontiguousarray(np.swapaxes(out, 1, 2)).reshape(m, n1 * n2)


def build_grid_1d(interval: Interval1D, n_points: int) -> SpectralGrid:
    """Chebyshev-Lobatto grid on an interval with derivative and quadrature
    operators and boundary bookkeeping."""
    if n_points < 4:
        raise GridResolutionError(f"1D grid needs N >= 4, got {n_points}")
    x = chebyshev_extrema(n_points, interval.a, interval.b)
    bw = barycentric_weights(n_points)
    D = differentiation_matrix(x, bw)
    D2 = D @ D
    w = clenshaw_curtis_weights(n_points, interval.a, interval.b)
    return SpectralGrid(
        dim=1,
        points_per_dim=(n_points,),
        intervals=(interval,),
        nodes=x[:, None],
        D1=(D,),
        D2=(D2,),
        quad_weights=w,
        boundary_idx=np.array([0, n_points - 1]),
        normals=np.array([[-1.0], [1.0]]),
        axis_nodes=(x,),
        axis_D1=(D,),
        axis_bary=(bw,),
    )


def build_grid_2d(
    intervals: tuple[Interval1D, Interval1D], n1: int, n2: int
) -> SpectralGrid:
    """Tensor-product Chebyshev-Lobatto grid on a box.

    Operators act on length N1*N2 vectors ordered dimension-1-fastest.
    """
    if n1 < 4 or n2 < 4:
        raise GridResolutionError(f"2D grid needs N1, N2 >= 4, got ({n1}, {n2})")
    iv1, iv2 = intervals
    x1 = chebyshev_extrema(n1, iv1.a, iv1.b)
    x2 = chebyshev_extrema(n2, iv2.a, iv2.b)
    bw1 = barycentric_weights(n1)
    bw2 = barycentric_weights(n2)
    d1 = differentiation_matrix(x1, bw1)
    d2 = differentiation_matrix(x2, bw2)
    w1 = clenshaw_curtis_weights(n1, iv1.a, iv1.b)
    w2 = clenshaw_curtis_weights(n2, iv2.a, iv2.b)

    i2, i1 = np.divmod(np.arange(n1 * n2), n1)
    nodes = np.column_stack([x1[i1], x2[i2]])

    D1_full = (np.kron(np.eye(n2), d1), np.kron(d2, np.eye(n1)))
    D2_full = (np.kron(np.eye(n2), d1 @ d1), np.kron(d2 @ d2, np.eye(n1)))
    quad = np.kron(w2, w1)

    on_edge1 = (i1 == 0) | (i1 == n1 - 1)
    on_edge2 = (i2 == 0) | (i2 == n2 - 1)
    boundary_idx = np.nonzero(on_edge1 | on_edge2)[0]

    # Corner nodes sit on two edges; the dimension-1 edge supplies the normal.
    normals = np.zeros((boundary_idx.size, 2))
    for row, k in enumerate(boundary_idx):
        if i1[k] == 0:
            normals[row] = (-1.0, 0.0)
        elif i1[k] == n1 - 1:
            normals[row] = (1.0, 0.0)
        elif i2[k] == 0:
            normals[row] = (0.0, -1.0)
        else:
            normals[row] = (0.0, 1.0)

    return SpectralGrid(
        dim=2,
        points_per_dim=(n1, n2),
        intervals=(iv1, iv2),
        nodes=nodes,
        D1=D1_full,
        D2=D2_full,
        quad_weights=quad,
        boundary_idx=boundary_idx,
        normals=normals,
        axis_nodes=(x1, x2),
        axis_D1=(d1, d2),
        axis_bary=(bw1, bw2),
    )


def _interp_vector(x: np.ndarray, bw: np.ndarray, a: float, b: float, q: float):
    """Row vector lam with lam @ values = interpolant(q); exact at nodes."""
    if q < a or q > b:
        raise ExtrapolationError(f"query {q} outside [{a}, {b}]")
    diff = q - x
    hit = np.nonzero(diff == 0.0)[0]
    lam = np.zeros_like(x)
    if hit.size:
        lam[hit[0]] = 1.0
        return lam
    lam = bw / diff
    return lam / lam.sum()


def barycentric_interp(grid: SpectralGrid, values: np.ndarray, query) -> float:
    """Evaluate the polynomial interpolant of nodal values at a point.

    1D grids take a scalar query, 2D grids an (x1, x2) pair.  Evaluation at
    a grid node returns the stored value exactly.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.ndof,):
        raise ValueError(f"values has shape {values.shape}, expected ({grid.ndof},)")
    if grid.dim == 1:
        q = float(np.atleast_1d(query)[0])
        iv = grid.intervals[0]
        lam = _interp_vector(grid.axis_nodes[0], grid.axis_bary[0], iv.a, iv.b, q)
        return float(lam @ values)
    q1, q2 = (float(v) for v in query)
    lam1 = _interp_vector(
        grid.axis_nodes[0], grid.axis_bary[0], grid.intervals[0].a, grid.intervals[0].b, q1
    )
    lam2 = _interp_vector(
        grid.axis_nodes[1], grid.axis_bary[1], grid.intervals[1].a, grid.intervals[1].b, q2
    )
    n1, n2 = grid.points_per_dim
    return float(lam2 @ values.reshape(n2, n1) @ lam1)


def quadrature(grid: SpectralGrid, values: np.ndarray) -> float:
    """Clenshaw-Curtis approximation of the integral of a nodal field."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.ndof,):
        raise ValueError(f"values has shape {values.shape}, expected ({grid.ndof},)")
    return float(grid.quad_weights @ values)


@dataclass
class TimeGrid:
    """Chebyshev-Lobatto time nodes on [0, T], ascending.

    times[0] == 0 and times[n] == T exactly; quadrature weights integrate
    over the horizon, and barycentric weights drive trajectory interpolation.
    """

    T: float
    n: int
    times: np.ndarray
    quad_weights: np.ndarray = field(repr=False, default=None)
    bary: np.ndarray = field(repr=False, default=None)

    def interp_weights(self, t: float) -> np.ndarray:
        """Interpolation row vector over the stored time columns."""
        return _interp_vector(self.times, self.bary, 0.0, self.T, float(t))


def build_time_grid(T: float, n: int) -> TimeGrid:
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if n < 2:
        raise GridResolutionError(f"time grid needs n >= 2, got {n}")
    times = chebyshev_extrema(n + 1, 0.0, T)
    return TimeGrid(
        T=T,
        n=n,
        times=times,
        quad_weights=clenshaw_curtis_weights(n + 1, 0.0, T),
        bary=barycentric_weights(n + 1),
    )
