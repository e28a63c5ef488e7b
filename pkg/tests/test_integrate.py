import numpy as np
import pytest

from densopt import (
    ControlKind,
    ControlProblem,
    Dirichlet,
    ExtrapolationError,
    IntegratorConfig,
    Interval1D,
    NoFlux,
    SpaceTimeField,
    build_grid_1d,
    build_time_grid,
    evaluate_trajectory,
    solve_adjoint,
    solve_state,
    state_boundary_residual,
    adjoint_boundary_residual,
)
from densopt.integrate import build_state_system, build_adjoint_system
from densopt.optimize import error_measure

from conftest import example1_problem


def _dirichlet_heat_problem(n_points=30, n_steps=12):
    grid = build_grid_1d(Interval1D(-1, 1), n_points)
    timegrid = build_time_grid(1.0, n_steps)
    x = grid.nodes[:, 0]
    return ControlProblem(
        grid=grid,
        timegrid=timegrid,
        kind=ControlKind.FLOW,
        bc=Dirichlet(0.0),
        kappa=0.0,
        beta=1.0,
        rho_hat=lambda t: np.zeros(n_points),
        rho0=np.sin(np.pi * (x + 1) / 2),
        interaction=None,
    )


def test_pure_diffusion_matches_heat_kernel_decay():
    prob = _dirichlet_heat_problem()
    W = np.zeros((prob.control_rows, prob.timegrid.n + 1))
    P = solve_state(prob, W)
    lam = (np.pi / 2) ** 2
    exact = prob.rho0[:, None] * np.exp(-lam * prob.timegrid.times)[None, :]
    assert np.max(np.abs(P.values - exact)) <= 1e-6


def test_uniform_state_is_stationary(prob_example1):
    W = np.zeros((prob_example1.control_rows, 21))
    P = solve_state(prob_example1, W)
    assert np.max(np.abs(P.values - 0.5)) <= 1e-8


def test_boundary_residual_at_stored_nodes(grid30, timegrid20, op30):
    cfg = IntegratorConfig()
    prob = example1_problem(grid30, timegrid20, op30, kappa=-1.0)
    W = np.zeros((prob.control_rows, 21))
    P = solve_state(prob, W, cfg)
    for k, t in enumerate(timegrid20.times):
        if k == 0:
            continue  # column 0 is the unprojected initial condition
        res = state_boundary_residual(prob, P.values[:, k], np.zeros((1, 30)), t)
        assert np.max(np.abs(res)) <= 10 * cfg.abs_tol


def test_mass_conservation_noflux(grid30, timegrid20, op30):
    for kappa in (-1.0, 0.0, 1.0):
        prob = example1_problem(grid30, timegrid20, op30, kappa=kappa)
        W = np.zeros((prob.control_rows, 21))
        P = solve_state(prob, W)
        mass = grid30.quad_weights @ P.values
        assert np.max(np.abs(mass - prob.initial_mass)) <= 1e-6 * abs(prob.initial_mass)


def test_state_column0_is_rho0_even_when_projected(grid30, timegrid20, op30):
    prob = example1_problem(grid30, timegrid20, op30, kappa=1.0)
    W = np.zeros((prob.control_rows, 21))
    P = solve_state(prob, W)
    assert np.all(P.values[:, 0] == prob.rho0)


def test_adjoint_zero_for_zero_misfit(grid30, timegrid20, op30):
    prob = example1_problem(grid30, timegrid20, op30, kappa=1.0)
    W = np.zeros((prob.control_rows, 21))
    P = solve_state(prob, W)
    matched = ControlProblem(
        grid=grid30,
        timegrid=timegrid20,
        kind=ControlKind.FLOW,
        bc=NoFlux(),
        kappa=1.0,
        beta=1e-3,
        rho_hat=lambda t: evaluate_trajectory(P, timegrid20, t),
        rho0=prob.rho0,
        interaction=prob.interaction,
    )
    Q = solve_adjoint(matched, P, W)
    assert np.all(Q.values[:, -1] == 0.0)
    assert np.max(np.abs(Q.values)) <= 1e-6


def test_adjoint_dirichlet_boundary_enforced():
    prob = _dirichlet_heat_problem()
    cfg = IntegratorConfig()
    W = np.zeros((prob.control_rows, prob.timegrid.n + 1))
    P = solve_state(prob, W, cfg)
    Q = solve_adjoint(prob, P, W, cfg)
    assert np.all(Q.values[:, -1] == 0.0)
    bidx = prob.grid.boundary_idx
    assert np.max(np.abs(Q.values[bidx, :])) <= 10 * cfg.abs_tol


def test_adjoint_noflux_boundary_enforced(grid30, timegrid20, op30):
    cfg = IntegratorConfig()
    prob = example1_problem(grid30, timegrid20, op30, kappa=-1.0)
    W = np.zeros((prob.control_rows, 21))
    P = solve_state(prob, W, cfg)
    Q = solve_adjoint(prob, P, W, cfg)
    for k in range(timegrid20.n):
        res = adjoint_boundary_residual(prob, Q.values[:, k])
        assert np.max(np.abs(res)) <= 10 * cfg.abs_tol


def test_time_reversal_symmetry():
    """Self-adjoint diffusion with forcing symmetric about T/2: the adjoint
    trajectory is the state trajectory with columns reversed."""
    grid = build_grid_1d(Interval1D(-1, 1), 24)
    timegrid = build_time_grid(1.0, 16)
    x = grid.nodes[:, 0]

    def forcing(t):
        return np.sin(np.pi * (x + 1)) * (t * (1 - t) + 0.2)

    prob = ControlProblem(
        grid=grid,
        timegrid=timegrid,
        kind=ControlKind.FLOW,
        bc=Dirichlet(0.0),
        kappa=0.0,
        beta=1.0,
        rho_hat=lambda t: np.zeros(grid.ndof),  # replaced below
        rho0=np.zeros(grid.ndof),
        f=forcing,
        interaction=None,
    )
    W = np.zeros((prob.control_rows, timegrid.n + 1))
    P = solve_state(prob, W)
    driven = ControlProblem(
        grid=grid,
        timegrid=timegrid,
        kind=ControlKind.FLOW,
        bc=Dirichlet(0.0),
        kappa=0.0,
        beta=1.0,
        rho_hat=lambda t: evaluate_trajectory(P, timegrid, t) - forcing(t),
        rho0=np.zeros(grid.ndof),
        f=forcing,
        interaction=None,
    )
    Q = solve_adjoint(driven, P, W)
    assert error_measure(Q.values, P.values[:, ::-1], grid, timegrid) <= 1e-6


def test_refinement_stability(timegrid20, op30):
    """Doubling N changes the uncontrolled interacting trajectory by less
    than 1e-6 in the space-L2/time-Linf measure."""
    from densopt import assemble, barycentric_interp, gaussian_gradient_kernel

    coarse = build_grid_1d(Interval1D(-1, 1), 30)
    fine = build_grid_1d(Interval1D(-1, 1), 60)
    op_fine = assemble(fine, gaussian_gradient_kernel(1), -1.0)
    p_coarse = example1_problem(coarse, timegrid20, op30, kappa=-1.0)
    p_fine = example1_problem(fine, timegrid20, op_fine, kappa=-1.0)
    Pc = solve_state(p_coarse, np.zeros((1 * 30, 21)))
    Pf = solve_state(p_fine, np.zeros((1 * 60, 21)))
    onto_coarse = np.empty_like(Pc.values)
    for k in range(21):
        for i, xq in enumerate(coarse.nodes[:, 0]):
            onto_coarse[i, k] = barycentric_interp(fine, Pf.values[:, k], xq)
    assert error_measure(Pc.values, onto_coarse, coarse, timegrid20) <= 1e-6


def test_evaluate_trajectory(timegrid20):
    rng = np.random.default_rng(5)
    F = SpaceTimeField(values=rng.standard_normal((4, 21)))
    for k in (0, 7, 20):
        got = evaluate_trajectory(F, timegrid20, timegrid20.times[k])
        assert np.all(got == F.values[:, k])
    lin = SpaceTimeField(values=np.outer(np.arange(4.0), timegrid20.times))
    got = evaluate_trajectory(lin, timegrid20, 0.377)
    assert np.max(np.abs(got - np.arange(4.0) * 0.377)) <= 1e-13
    smooth = SpaceTimeField(
        values=np.exp(-timegrid20.times)[None, :] * np.ones((2, 1))
    )
    got = evaluate_trajectory(smooth, timegrid20, 0.61)
    assert abs(got[0] - np.exp(-0.61)) <= 1e-8
    with pytest.raises(ExtrapolationError):
        evaluate_trajectory(F, timegrid20, 1.2)


def test_state_jacobian_matches_finite_differences(grid30, timegrid20, op30):
    prob = example1_problem(grid30, timegrid20, op30, kappa=1.0)
    rng = np.random.default_rng(2)
    W = 0.1 * rng.standard_normal((prob.control_rows, 21))
    system = build_state_system(prob, W)
    y = 0.5 + 0.1 * rng.standard_normal(30)
    t = 0.31
    J = system.jac(y, t)
    f0 = system.rhs(y, t)
    J_fd = np.empty_like(J)
    for j in range(30):
        h = 1e-7 * max(abs(y[j]), 1.0)
        yp = y.copy()
        yp[j] += h
        ym = y.copy()
        ym[j] -= h
        J_fd[:, j] = (system.rhs(yp, t) - system.rhs(ym, t)) / (2 * h)
    scale = max(1.0, np.max(np.abs(J)))
    assert np.max(np.abs(J - J_fd)) / scale <= 1e-6


def test_adjoint_jacobian_matches_finite_differences(grid30, timegrid20, op30):
    prob = example1_problem(grid30, timegrid20, op30, kappa=-1.0)
    rng = np.random.default_rng(4)
    W = 0.1 * rng.standard_normal((prob.control_rows, 21))
    P = SpaceTimeField(values=0.5 + 0.1 * rng.standard_normal((30, 21)))
    system = build_adjoint_system(prob, P, W)
    q = rng.standard_normal(30)
    tau = 0.42
    J = system.jac(q, tau)
    J_fd = np.empty_like(J)
    for j in range(30):
        h = 1e-7 * max(abs(q[j]), 1.0)
        qp = q.copy()
        qp[j] += h
        qm = q.copy()
        qm[j] -= h
        J_fd[:, j] = (system.rhs(qp, tau) - system.rhs(qm, tau)) / (2 * h)
    scale = max(1.0, np.max(np.abs(J)))
    assert np.max(np.abs(J - J_fd)) / scale <= 1e-6


def test_control_shape_validated(prob_example1):
    with pytest.raises(ValueError):
        solve_state(prob_example1, np.zeros((2, 21)))
    with pytest.raises(ValueError):
        solve_state(prob_example1, np.zeros((30, 20)))


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(abs_tol=-1e-8)
    with pytest.raises(ValueError):
        IntegratorConfig(max_step=0.0)
