"""Pseudospectral optimal control of non-local advection-diffusion particle
dynamics: Chebyshev collocation in space and time, boundary-bordered DAE
solves for the state and adjoint equations, and a mixed fixed-point sweep for
the first-order optimality system."""

__version__ = "0.1.0"

from .grids import (
    Interval1D,
    SpectralGrid,
    TimeGrid,
    build_grid_1d,
    build_grid_2d,
    build_time_grid,
    barycentric_interp,
    quadrature,
    GridResolutionError,
    ExtrapolationError,
)
from .interaction import (
    Kernel,
    InteractionOperator,
    gaussian_gradient_kernel,
    assemble,
    interaction_flux,
    interaction_divergence,
    adjoint_interaction,
    adjoint_interaction_odd,
)
from .model import (
    ControlKind,
    Dirichlet,
    NoFlux,
    ControlProblem,
    SpaceTimeField,
    NumericalBlowupError,
    state_rhs,
    state_boundary_residual,
    adjoint_rhs,
    adjoint_boundary_residual,
    gradient_update,
    cost,
    field_on_grid,
)
from .integrate import (
    IntegratorConfig,
    DaeSystem,
    DivergedSolveError,
    solve_state,
    solve_adjoint,
    evaluate_trajectory,
)
from .optimize import (
    OptimizerConfig,
    OptimizationRun,
    CellResult,
    error_measure,
    fixed_point_solve,
    sweep,
)

__all__ = [
    "Interval1D",
    "SpectralGrid",
    "TimeGrid",
    "build_grid_1d",
    "build_grid_2d",
    "build_time_grid",
    "barycentric_interp",
    "quadrature",
    "GridResolutionError",
    "ExtrapolationError",
    "Kernel",
    "InteractionOperator",
    "gaussian_gradient_kernel",
    "assemble",
    "interaction_flux",
    "interaction_divergence",
    "adjoint_interaction",
    "adjoint_interaction_odd",
    "ControlKind",
    "Dirichlet",
    "NoFlux",
    "ControlProblem",
    "SpaceTimeField",
    "NumericalBlowupError",
    "state_rhs",
    "state_boundary_residual",
    "adjoint_rhs",
    "adjoint_boundary_residual",
    "gradient_update",
    "cost",
    "field_on_grid",
    "IntegratorConfig",
    "DaeSystem",
    "DivergedSolveError",
    "solve_state",
    "solve_adjoint",
    "evaluate_trajectory",
    "OptimizerConfig",
    "OptimizationRun",
    "CellResult",
    "error_measure",
    "fixed_point_solve",
    "sweep",
]
