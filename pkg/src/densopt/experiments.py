"""Built-in experiment definitions.

Seven ready-made control problems: three 1D flow-control cases (no-flux,
no-flux with steeper targets, and the Dirichlet variant), two 1D source
control cases, and two 2D flow-control cases.  Inputs are module-level
functions (directly evaluated, bypassing the expression parser) with their
display formulas kept alongside for the CLI listing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

from .grids import Interval1D, build_grid_1d, build_grid_2d, build_time_grid
from .interaction import assemble, gaussian_gradient_kernel
from .model import ControlKind, ControlProblem, Dirichlet, NoFlux

__all__ = ["BuiltinExperiment", "BUILTINS", "build_builtin_problem", "describe_builtins"]

DEFAULT_KAPPAS = (-1.0, 0.0, 1.0)
DEFAULT_BETAS = (1e-3, 1e-1, 1e1, 1e3)

# Mass normalization of the 2D Gaussian target bump over (-1,1)^2.
GAUSS_NORM_2D = float(
    (np.sqrt(np.pi / 12.0) * (erf(1.2 * np.sqrt(3.0)) + erf(0.8 * np.sqrt(3.0)))) ** 2
)


def _ex1_rho_hat(x, t):
    return (1 - t) / 2 + t / 2 * (np.sin(np.pi * (x - 2) / 2) + 1)


def _ex1_rho0(x):
    return np.full_like(x, 0.5)


def _ex2_rho_hat(x, t):
    return (1 - t) / 2 * (np.cos(np.pi * x) + 1) + t / 2 * (-np.cos(2 * np.pi * x) + 1)


def _ex2_rho0(x):
    return 0.5 * np.cos(np.pi * x) + 0.5


def _ex4_v_ext(x):
    return 0.5 * ((x + 0.3) ** 2 - 0.2) * ((x - 0.4) ** 2 - 0.3)


def _ex5_rho_hat(x, t):
    return (1 - t) / 2 + t / 2 * (-np.cos(np.pi * x) + 1)


def _ex2d1_rho_hat(x1, x2, t):
    return (1 - t) / 4 + t / 4 * (
        np.sin(np.pi * (x1 - 2) / 2) * np.sin(np.pi * (x2 - 2) / 2) + 1
    )


def _ex2d_rho0(x1, x2):
    return np.full_like(x1, 0.25)


def _ex2d2_rho_hat(x1, x2, t):
    bump = np.exp(-3.0 * ((x1 + 0.2) ** 2 + (x2 + 0.2) ** 2))
    return (1 - t) / 4 + t / GAUSS_NORM_2D * bump


def _ex2d2_v_ext(x1, x2):
    return (
        ((x1 + 0.3) ** 2 - 1)
        * ((x1 - 0.4) ** 2 - 0.5)
        * ((x2 + 0.3) ** 2 - 1)
        * ((x2 - 0.4) ** 2 - 0.5)
    )


@dataclass(frozen=True)
class BuiltinExperiment:
    key: str
    title: str
    control: str  # "flow" | "source"
    bc: str  # "noflux" | "dirichlet"
    dim: int
    N: tuple[int, ...]
    n_steps: int
    mixing: float
    rho_hat: Callable
    rho0: Callable
    v_ext: Optional[Callable]
    formulas: dict[str, str]
    bc_value: float = 0.0
    T: float = 1.0
    domain: tuple[tuple[float, float], ...] = ((-1.0, 1.0),)
    kappas: tuple[float, ...] = DEFAULT_KAPPAS
    betas: tuple[float, ...] = DEFAULT_BETAS
    notes: str = ""


BUILTINS: dict[str, BuiltinExperiment] = {}


def _register(exp: BuiltinExperiment):
    BUILTINS[exp.key] = exp


_register(
    BuiltinExperiment(
        key="example1",
        title="1D flow control, no-flux: uniform start towards a shifted sine",
        control="flow",
        bc="noflux",
        dim=1,
        N=(30,),
        n_steps=20,
        mixing=0.01,
        rho_hat=_ex1_rho_hat,
        rho0=_ex1_rho0,
        v_ext=None,
        formulas={
            "rho_hat": "(1-t)/2 + t/2*(sin(pi*(x-2)/2) + 1)",
            "rho0": "1/2",
            "f": "0",
            "v_ext": "0",
        },
    )
)

_register(
    BuiltinExperiment(
        key="example2",
        title="1D flow control, no-flux: central pile split into two",
        control="flow",
        bc="noflux",
        dim=1,
        N=(40,),
        n_steps=30,
        mixing=0.01,
        rho_hat=_ex2_rho_hat,
        rho0=_ex2_rho0,
        v_ext=None,
        formulas={
            "rho_hat": "(1-t)/2*(cos(pi*x) + 1) + t/2*(-cos(2*pi*x) + 1)",
            "rho0": "cos(pi*x)/2 + 1/2",
            "f": "0",
            "v_ext": "0",
        },
        notes="steeper target; N=40, n=30",
    )
)

_register(
    BuiltinExperiment(
        key="example3",
        title="1D flow control, Dirichlet: same inputs as example2",
        control="flow",
        bc="dirichlet",
        bc_value=0.0,
        dim=1,
        N=(40,),
        n_steps=30,
        mixing=0.01,
        rho_hat=_ex2_rho_hat,
        rho0=_ex2_rho0,
        v_ext=None,
        formulas={
            "rho_hat": "(1-t)/2*(cos(pi*x) + 1) + t/2*(-cos(2*pi*x) + 1)",
            "rho0": "cos(pi*x)/2 + 1/2",
            "f": "0",
            "v_ext": "0",
        },
        notes="Dirichlet rho=0 on the boundary; N=40, n=30",
    )
)

_register(
    BuiltinExperiment(
        key="example4",
        title="1D source control, Dirichlet: pile split inside a double-well potential",
        control="source",
        bc="dirichlet",
        bc_value=0.0,
        dim=1,
        N=(30,),
        n_steps=20,
        mixing=0.005,
        rho_hat=_ex2_rho_hat,
        rho0=_ex2_rho0,
        v_ext=_ex4_v_ext,
        formulas={
            "rho_hat": "(1-t)/2*(cos(pi*x) + 1) + t/2*(-cos(2*pi*x) + 1)",
            "rho0": "cos(pi*x)/2 + 1/2",
            "f": "0",
            "v_ext": "1/2*((x + 0.3)^2 - 0.2)*((x - 0.4)^2 - 0.3)",
        },
        notes="lambda=0.005 (the potential slows the fixed point)",
    )
)

_register(
    BuiltinExperiment(
        key="example5",
        title="1D source control, no-flux: uniform start towards an inverted cosine",
        control="source",
        bc="noflux",
        dim=1,
        N=(40,),
        n_steps=30,
        mixing=0.001,
        rho_hat=_ex5_rho_hat,
        rho0=_ex1_rho0,
        v_ext=None,
        formulas={
            "rho_hat": "(1-t)/2 + t/2*(-cos(pi*x) + 1)",
            "rho0": "1/2",
            "f": "0",
            "v_ext": "0",
        },
        notes="lambda=0.001, N=40, n=30 for stable convergence",
    )
)

_register(
    BuiltinExperiment(
        key="example2d_1",
        title="2D flow control, no-flux: uniform start towards corner piles",
        control="flow",
        bc="noflux",
        dim=2,
        N=(30, 30),
        n_steps=20,
        mixing=0.01,
        rho_hat=_ex2d1_rho_hat,
        rho0=_ex2d_rho0,
        v_ext=None,
        domain=((-1.0, 1.0), (-1.0, 1.0)),
        formulas={
            "rho_hat": "(1-t)/4 + t/4*(sin(pi*(x1-2)/2)*sin(pi*(x2-2)/2) + 1)",
            "rho0": "1/4",
            "f": "0",
            "v_ext": "0",
        },
    )
)

_register(
    BuiltinExperiment(
        key="example2d_2",
        title="2D flow control, no-flux: Gaussian target in a quartic potential",
        control="flow",
        bc="noflux",
        dim=2,
        N=(30, 30),
        n_steps=20,
        mixing=0.01,
        rho_hat=_ex2d2_rho_hat,
        rho0=_ex2d_rho0,
        v_ext=_ex2d2_v_ext,
        domain=((-1.0, 1.0), (-1.0, 1.0)),
        formulas={
            "rho_hat": "(1-t)/4 + (t/Z)*exp(-3*((x1+0.2)^2 + (x2+0.2)^2))",
            "rho0": "1/4",
            "f": "0",
            "v_ext": "((x1+0.3)^2 - 1)*((x1-0.4)^2 - 0.5)"
            "*((x2+0.3)^2 - 1)*((x2-0.4)^2 - 0.5)",
        },
        notes=f"Z ~ {GAUSS_NORM_2D:.4f} normalizes the Gaussian bump mass",
    )
)


def build_builtin_problem(key: str, kappa: float, beta: float) -> ControlProblem:
    """Instantiate one built-in experiment at a (kappa, beta) cell."""
    exp = BUILTINS[key]
    if exp.dim == 1:
        (a, b), = exp.domain
        grid = build_grid_1d(Interval1D(a, b), exp.N[0])
    else:
        (a1, b1), (a2, b2) = exp.domain
        grid = build_grid_2d(
            (Interval1D(a1, b1), Interval1D(a2, b2)), exp.N[0], exp.N[1]
        )
    timegrid = build_time_grid(exp.T, exp.n_steps)
    op = assemble(grid, gaussian_gradient_kernel(exp.dim), kappa)
    coords = tuple(grid.nodes[:, d] for d in range(grid.dim))

    def rho_hat(t):
        return np.broadcast_to(
            np.asarray(exp.rho_hat(*coords, t), dtype=float), (grid.ndof,)
        ).copy()

    v_ext = None if exp.v_ext is None else np.asarray(exp.v_ext(*coords), dtype=float)
    return ControlProblem(
        grid=grid,
        timegrid=timegrid,
        kind=ControlKind.FLOW if exp.control == "flow" else ControlKind.SOURCE,
        bc=Dirichlet(exp.bc_value) if exp.bc == "dirichlet" else NoFlux(),
        kappa=kappa,
        beta=beta,
        rho_hat=rho_hat,
        rho0=np.asarray(exp.rho0(*coords), dtype=float),
        v_ext=v_ext,
        interaction=op,
    )


def describe_builtins() -> str:
    """Plain-text listing of the built-in experiments with their inputs."""
    lines = []
    for exp in BUILTINS.values():
        lines.append(f"{exp.key}: {exp.title}")
        lines.append(
            f"  control={exp.control} bc={exp.bc}"
            + (f"(c={exp.bc_value:g})" if exp.bc == "dirichlet" else "")
            + f" domain={list(map(list, exp.domain))} T={exp.T:g}"
        )
        lines.append(
            f"  N={list(exp.N)} n={exp.n_steps} lambda={exp.mixing:g}"
            f" kappa={list(exp.kappas)} beta={list(exp.betas)}"
        )
        for name in ("rho_hat", "rho0", "f", "v_ext"):
            lines.append(f"  {name} = {exp.formulas[name]}")
        if exp.notes:
            lines.append(f"  note: {exp.notes}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
