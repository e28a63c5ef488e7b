import logging

import numpy as np
import pytest

from densopt import (
    ControlKind,
    ControlProblem,
    Interval1D,
    NoFlux,
    assemble,
    build_grid_1d,
    build_grid_2d,
    build_time_grid,
    field_on_grid,
    gaussian_gradient_kernel,
)

# The IC projection warning fires on purpose in many interaction runs.
logging.getLogger("densopt.integrate").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def grid30():
    return build_grid_1d(Interval1D(-1.0, 1.0), 30)


@pytest.fixture(scope="session")
def grid_small():
    return build_grid_1d(Interval1D(-1.0, 1.0), 14)


@pytest.fixture(scope="session")
def grid2d_small():
    iv = Interval1D(-1.0, 1.0)
    return build_grid_2d((iv, iv), 8, 8)


@pytest.fixture(scope="session")
def timegrid20():
    return build_time_grid(1.0, 20)


@pytest.fixture(scope="session")
def op30(grid30):
    return assemble(grid30, gaussian_gradient_kernel(1), 1.0)


def example1_rho_hat(x, t):
    return (1 - t) / 2 + t / 2 * (np.sin(np.pi * (x - 2) / 2) + 1)


def example1_problem(grid, timegrid, op, kappa=0.0, beta=1e-3):
    """Uniform initial density driven towards a shifted sine; no-flux."""
    return ControlProblem(
        grid=grid,
        timegrid=timegrid,
        kind=ControlKind.FLOW,
        bc=NoFlux(),
        kappa=kappa,
        beta=beta,
        rho_hat=field_on_grid(grid, example1_rho_hat),
        rho0=np.full(grid.ndof, 0.5),
        interaction=op.with_kappa(kappa),
    )


@pytest.fixture(scope="session")
def prob_example1(grid30, timegrid20, op30):
    return example1_problem(grid30, timegrid20, op30)
