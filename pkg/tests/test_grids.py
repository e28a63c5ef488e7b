import numpy as np
import pytest

from densopt import (
    ExtrapolationError,
    GridResolutionError,
    Interval1D,
    barycentric_interp,
    build_grid_1d,
    build_grid_2d,
    build_time_grid,
    quadrature,
)


def test_interval_requires_order():
    with pytest.raises(ValueError):
        Interval1D(1.0, -1.0)


def test_1d_nodes_include_endpoints_and_center():
    g = build_grid_1d(Interval1D(-1, 1), 5)
    x = g.nodes[:, 0]
    assert x[0] == -1.0 and x[-1] == 1.0
    assert abs(x[2]) < 1e-15
    assert np.all(np.diff(x) > 0)


def test_1d_rejects_low_resolution():
    with pytest.raises(GridResolutionError):
        build_grid_1d(Interval1D(-1, 1), 3)


def test_d1_exact_on_quadratic():
    g = build_grid_1d(Interval1D(-1, 1), 5)
    x = g.nodes[:, 0]
    assert np.max(np.abs(g.D1[0] @ x**2 - 2 * x)) <= 1e-10


def test_d1_annihilates_constants():
    g = build_grid_1d(Interval1D(-2, 3), 20)
    ones = np.ones(20)
    assert np.max(np.abs(g.D1[0] @ ones)) <= 1e-9
    assert np.max(np.abs(g.D2[0] @ ones)) <= 1e-9
    assert np.max(np.abs(g.D1[0].sum(axis=1))) <= 1e-9
    assert np.max(np.abs(g.D2[0].sum(axis=1))) <= 1e-9


def test_d2_is_square_of_d1():
    g = build_grid_1d(Interval1D(0, 2), 16)
    assert np.allclose(g.D2[0], g.D1[0] @ g.D1[0], rtol=0, atol=1e-12)


def test_2d_lifted_d2_is_square_of_lifted_d1():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(0, 2)), 6, 7)
    for d in (0, 1):
        assert np.allclose(g.D2[d], g.D1[d] @ g.D1[d], rtol=0, atol=1e-10)


def test_quadrature_weights_positive_sum_to_measure():
    g = build_grid_1d(Interval1D(-1, 1), 30)
    assert np.all(g.quad_weights > 0)
    assert abs(g.quad_weights.sum() - 2.0) <= 1e-12
    g2 = build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 6, 7)
    assert np.all(g2.quad_weights > 0)
    assert abs(g2.quad_weights.sum() - 4.0) <= 1e-12


def test_quadrature_exact_on_low_degree():
    g = build_grid_1d(Interval1D(-1, 1), 30)
    x = g.nodes[:, 0]
    assert abs(quadrature(g, np.ones(30)) - 2.0) <= 1e-12
    assert abs(quadrature(g, x**2) - 2.0 / 3.0) <= 1e-12


def test_quadrature_exponential():
    g = build_grid_1d(Interval1D(-1, 1), 30)
    x = g.nodes[:, 0]
    assert abs(quadrature(g, np.exp(x)) - (np.e - 1 / np.e)) <= 1e-12


def test_quadrature_shape_error():
    g = build_grid_1d(Interval1D(-1, 1), 10)
    with pytest.raises(ValueError):
        quadrature(g, np.ones(11))


def test_spectral_accuracy_of_d1():
    errs = {}
    for n in (8, 16, 24):
        g = build_grid_1d(Interval1D(-1, 1), n)
        x = g.nodes[:, 0]
        errs[n] = np.max(np.abs(g.D1[0] @ np.exp(x) - np.exp(x)))
    # Geometric decay until the round-off plateau; both refinements must sit
    # far below the N=8 error and under the 1e-10 bound.
    assert errs[8] > 1e3 * errs[16]
    assert errs[16] > errs[24] or errs[16] <= 1e-12
    assert errs[16] <= 1e-10 and errs[24] <= 1e-10


def test_interp_matches_analytic():
    g = build_grid_1d(Interval1D(-1, 1), 30)
    vals = np.sin(np.pi * g.nodes[:, 0])
    assert abs(barycentric_interp(g, vals, 0.123) - np.sin(0.123 * np.pi)) <= 1e-10


def test_interp_identity_at_nodes():
    g = build_grid_1d(Interval1D(-1, 1), 12)
    rng = np.random.default_rng(3)
    vals = rng.standard_normal(12)
    for j in (0, 5, 11):
        assert barycentric_interp(g, vals, g.nodes[j, 0]) == vals[j]


def test_interp_constant_and_extrapolation():
    g = build_grid_1d(Interval1D(-1, 1), 9)
    vals = np.full(9, 4.25)
    assert abs(barycentric_interp(g, vals, 0.4711) - 4.25) <= 1e-13
    with pytest.raises(ExtrapolationError):
        barycentric_interp(g, vals, 1.5)


def test_interp_resample_is_identity():
    g = build_grid_1d(Interval1D(-1, 1), 15)
    rng = np.random.default_rng(7)
    vals = rng.standard_normal(15)
    resampled = [barycentric_interp(g, vals, x) for x in g.nodes[:, 0]]
    assert np.max(np.abs(np.asarray(resampled) - vals)) <= 1e-12


def test_2d_counts_and_boundary():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 5, 5)
    assert g.ndof == 25
    assert len(g.boundary_idx) == 16


def test_2d_rejects_low_resolution():
    with pytest.raises(GridResolutionError):
        build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 3, 5)


def test_2d_laplacian_on_quadratic():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 5, 5)
    f = g.nodes[:, 0] ** 2 + g.nodes[:, 1] ** 2
    lap = g.laplacian @ f
    assert np.max(np.abs(lap[g.interior_idx] - 4.0)) <= 1e-9


def test_2d_mixed_derivatives_commute():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(0, 2)), 12, 10)
    f = np.sin(g.nodes[:, 0]) * np.exp(0.5 * g.nodes[:, 1])
    d12 = g.deriv(g.deriv(f, 0), 1)
    d21 = g.deriv(g.deriv(f, 1), 0)
    assert np.max(np.abs(d12 - d21)) <= 1e-9


def test_2d_node_ordering_dimension1_fastest():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 5, 4)
    x1 = g.nodes[:5, 0]
    assert np.all(np.diff(x1) > 0)
    assert np.all(g.nodes[:5, 1] == g.nodes[0, 1])


def test_2d_normals_edges_and_corners():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 5, 5)
    norms = np.linalg.norm(g.normals, axis=1)
    assert np.max(np.abs(norms - 1.0)) == 0.0
    by_node = dict(zip(g.boundary_idx.tolist(), g.normals.tolist()))
    # corner (0, 0): dimension-1 edge wins
    assert by_node[0] == [-1.0, 0.0]
    # corner (N1-1, N2-1)
    assert by_node[24] == [1.0, 0.0]
    # mid-edge checks
    assert by_node[10] == [-1.0, 0.0]
    assert by_node[2] == [0.0, -1.0]
    assert by_node[22] == [0.0, 1.0]


def test_2d_deriv_matches_lifted_operators():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(0, 2)), 7, 6)
    rng = np.random.default_rng(11)
    v = rng.standard_normal(g.ndof)
    for ax in (0, 1):
        assert np.max(np.abs(g.deriv(v, ax) - g.D1[ax] @ v)) <= 1e-12
    M = rng.standard_normal((g.ndof, g.ndof))
    for ax in (0, 1):
        assert np.max(np.abs(g.d1_matmul(ax, M) - g.D1[ax] @ M)) <= 1e-11
        assert np.max(np.abs(g.matmul_d1(M, ax) - M @ g.D1[ax])) <= 1e-11


def test_2d_interp():
    g = build_grid_2d((Interval1D(-1, 1), Interval1D(-1, 1)), 20, 22)
    vals = np.sin(np.pi * g.nodes[:, 0]) * np.cos(g.nodes[:, 1])
    got = barycentric_interp(g, vals, (0.3, -0.41))
    assert abs(got - np.sin(0.3 * np.pi) * np.cos(-0.41)) <= 1e-10


def test_time_grid_endpoints_and_monotone():
    tg = build_time_grid(1.0, 20)
    assert tg.times[0] == 0.0 and tg.times[-1] == 1.0
    assert np.all(np.diff(tg.times) > 0)
    assert len(tg.times) == 21


def test_time_grid_validation():
    with pytest.raises(ValueError):
        build_time_grid(-1.0, 10)
    with pytest.raises(ValueError):
        build_time_grid(1.0, 1)
