import numpy as np
import pytest
from scipy.integrate import solve_ivp

from densopt import Interval1D, build_grid_1d
from densopt.dae import DivergedSolveError, integrate_dae


def test_matches_scipy_on_nonstiff_ode():
    """Plain ODE (all rows differential) against an independent solver."""

    def rhs(y, t):
        return np.array([y[1], -np.sin(y[0]) - 0.1 * y[1]])

    y0 = np.array([1.2, 0.0])
    outs = np.linspace(0.5, 10.0, 12)
    Y, _ = integrate_dae(rhs, y0, 0.0, 10.0, outs, np.array([True, True]))
    ref = solve_ivp(
        lambda t, y: rhs(y, t),
        (0.0, 10.0),
        y0,
        method="BDF",
        rtol=1e-10,
        atol=1e-10,
        t_eval=outs,
    )
    assert np.max(np.abs(Y - ref.y)) <= 1e-6


def test_stiff_linear_ode_with_analytic_jacobian():
    A = np.array([[-1000.0, 999.0], [0.0, -1.0]])

    def rhs(y, t):
        return A @ y

    def jac(y, t):
        return A

    y0 = np.array([2.0, 1.0])
    outs = np.array([0.5, 1.0, 3.0])
    Y, stats = integrate_dae(rhs, y0, 0.0, 3.0, outs, np.array([True, True]), jac=jac)
    # y2 = exp(-t); y1 = exp(-t) + (y1(0)-1) exp(-1000 t)
    exact = np.vstack([np.exp(-outs) + 1.0 * np.exp(-1000 * outs), np.exp(-outs)])
    assert np.max(np.abs(Y - exact)) <= 1e-7
    assert stats.n_steps < 400


def test_heat_equation_dae_matches_separation_of_variables():
    g = build_grid_1d(Interval1D(-1, 1), 30)
    x = g.nodes[:, 0]
    rho0 = np.sin(np.pi * (x + 1) / 2)
    bidx = g.boundary_idx
    mask = np.ones(30, bool)
    mask[bidx] = False
    D2 = g.D2[0]

    def rhs(y, t):
        out = D2 @ y
        out[bidx] = y[bidx]
        return out

    ts = np.linspace(0.1, 1.0, 6)
    Y, _ = integrate_dae(rhs, rho0, 0.0, 1.0, ts, mask)
    exact = np.exp(-((np.pi / 2) ** 2) * ts)[None, :] * rho0[:, None]
    assert np.max(np.abs(Y - exact)) <= 1e-6


def test_algebraic_rows_enforced_between_steps():
    """A time-dependent constraint row must track its manifold."""

    def rhs(y, t):
        return np.array([-y[0], y[1] - np.sin(3 * y[0] + t)])

    def jac(y, t):
        return np.array([[-1.0, 0.0], [-3 * np.cos(3 * y[0] + t), 1.0]])

    y0 = np.array([1.0, np.sin(3.0)])
    outs = np.linspace(0.07, 2.0, 23)
    Y, _ = integrate_dae(rhs, y0, 0.0, 2.0, outs, np.array([True, False]), jac=jac)
    y1 = np.exp(-outs)
    assert np.max(np.abs(Y[0] - y1)) <= 1e-7
    assert np.max(np.abs(Y[1] - np.sin(3 * y1 + outs))) <= 1e-7


def test_output_at_landing_time():
    def rhs(y, t):
        return np.array([np.cos(t)])

    outs = np.array([1.0])
    Y, _ = integrate_dae(rhs, np.zeros(1), 0.0, 1.0, outs, np.array([True]))
    assert abs(Y[0, 0] - np.sin(1.0)) <= 1e-7


def test_blowup_raises_with_failure_time():
    def rhs(y, t):
        return y * y  # finite-time blow-up at t = 1

    with pytest.raises(DivergedSolveError) as err:
        integrate_dae(
            rhs, np.array([1.0]), 0.0, 2.0, np.array([1.5]), np.array([True])
        )
    assert 0.5 <= err.value.time <= 1.1


def test_output_times_validated():
    def rhs(y, t):
        return -y

    with pytest.raises(ValueError):
        integrate_dae(rhs, np.ones(1), 0.0, 1.0, np.array([0.0]), np.array([True]))
    with pytest.raises(ValueError):
        integrate_dae(rhs, np.ones(1), 0.0, 1.0, np.array([1.5]), np.array([True]))


def test_fd_jacobian_fallback_agrees_with_analytic():
    A = np.array([[-4.0, 1.0], [2.0, -3.0]])

    def rhs(y, t):
        return A @ y + np.array([0.0, np.sin(t)])

    y0 = np.array([1.0, -1.0])
    outs = np.array([0.4, 0.9])
    Y_fd, _ = integrate_dae(rhs, y0, 0.0, 0.9, outs, np.array([True, True]))
    Y_an, _ = integrate_dae(
        rhs, y0, 0.0, 0.9, outs, np.array([True, True]), jac=lambda y, t: A
    )
    assert np.max(np.abs(Y_fd - Y_an)) <= 1e-6


def test_max_step_respected():
    calls = []

    def rhs(y, t):
        calls.append(t)
        return -y

    Y, stats = integrate_dae(
        rhs,
        np.ones(1),
        0.0,
        1.0,
        np.array([1.0]),
        np.array([True]),
        max_step=0.01,
    )
    assert stats.n_steps >= 100
    assert abs(Y[0, 0] - np.exp(-1)) <= 1e-7
