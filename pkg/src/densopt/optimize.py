"""Fixed-point sweep for the first-order optimality system.

Each sweep solves the forward equation under the current control, the
reversed-time adjoint driven by that state, evaluates the gradient equation
at every time node, and relaxes the control towards it with a mixing rate.
Termination is controlled by the space-L2 / time-Linf error measure between
the current control and the gradient-equation control.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import SpectralGrid, TimeGrid
from .integrate import DivergedSolveError, IntegratorConfig, solve_adjoint, solve_state
from .model import ControlKind, ControlProblem, SpaceTimeField, cost

__all__ = [
    "OptimizerConfig",
    "OptimizationRun",
    "CellResult",
    "error_measure",
    "fixed_point_solve",
    "sweep",
]

logger = logging.getLogger("densopt.optimize")

# Abort an unconverging run once E has not improved by at least this much
# over STAGNATION_WINDOW consecutive sweeps.
STAGNATION_WINDOW = 200
STAGNATION_DECREASE = 1e-12


@dataclass
class OptimizerConfig:
    """Fixed-point iteration parameters.

    mixing is the relaxation rate lambda in (0, 1]; opt_tol the termination
    tolerance on the control error measure; w_init the initial control guess
    (zero when omitted).
    """

    mixing: float = 0.01
    opt_tol: float = 1e-4
    max_iter: int = 20000
    w_init: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 < self.mixing <= 1.0:
            raise ValueError(f"mixing rate must be in (0, 1], got {self.mixing}")
        if self.opt_tol <= 0:
            raise ValueError("opt_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class OptimizationRun:
    """Converged fields and iteration trace of one fixed-point solve."""

    P: SpaceTimeField
    Q: SpaceTimeField
    W: SpaceTimeField
    J_uc: float
    J_c: float
    iterations: int
    error_trace: np.ndarray
    converged: bool


@dataclass
class CellResult:
    """Summary of one (kappa, beta) sweep cell."""

    kappa: float
    beta: float
    J_uc: float = np.nan
    J_c: float = np.nan
    iterations: int = 0
    converged: bool = False
    error: Optional[str] = None
    run: Optional[OptimizationRun] = field(default=None, repr=False)


def error_measure(y, y_ref, grid: SpectralGrid, timegrid: TimeGrid) -> float:
    """Max over stored time nodes of min(relative, absolute) spatial L2 error.

    The relative error guards its denominator with 1e-10; taking the minimum
    avoids an inflated relative error when both fields are numerically tiny.
    Stacked vector components contribute to a single L2 norm per time node.
    """
    y = y.values if isinstance(y, SpaceTimeField) else np.asarray(y, dtype=float)
    y_ref = (
        y_ref.values if isinstance(y_ref, SpaceTimeField) else np.asarray(y_ref, dtype=float)
    )
    if y.shape != y_ref.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_ref.shape}")
    n_times = timegrid.n + 1
    if y.shape[1] != n_times or y.shape[0] % grid.ndof != 0:
        raise ValueError(f"fields of shape {y.shape} do not match grid/time nodes")
    ncomp = y.shape[0] // grid.ndof
    wq = grid.quad_weights

    diff_sq = ((y - y_ref) ** 2).reshape(ncomp, grid.ndof, n_times).sum(axis=0)
    ref_sq = (y_ref**2).reshape(ncomp, grid.ndof, n_times).sum(axis=0)
    e_abs = np.sqrt(wq @ diff_sq)
    ref_norm = np.sqrt(wq @ ref_sq)
    e_rel = e_abs / (ref_norm + 1e-10)
    return float(np.max(np.minimum(e_abs, e_rel)))


def _gradient_field(prob: ControlProblem, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Gradient-equation control at every time node, stacked component-wise."""
    if prob.kind is ControlKind.SOURCE:
        return -Q / prob.beta
    parts = [
        -(P * prob.grid.d1_matmul(d, Q)) / prob.beta for d in range(prob.dim)
    ]
    return np.vstack(parts)


def fixed_point_solve(
    prob: ControlProblem,
    ocfg: OptimizerConfig = OptimizerConfig(),
    icfg: IntegratorConfig = IntegratorConfig(),
) -> OptimizationRun:
    """Run the sweeping iteration until the control satisfies the gradient
    equation to opt_tol.

    The iteration count equals the number of forward PDE solves.  The
    initial condition and the zero terminal adjoint value are never touched;
    only the control trajectory is updated between sweeps.
    """
    n_times = prob.timegrid.n + 1
    if ocfg.w_init is not None:
        W = np.array(ocfg.w_init, dtype=float)
        if W.shape != (prob.control_rows, n_times):
            raise ValueError(
                f"w_init has shape {W.shape}, expected {(prob.control_rows, n_times)}"
            )
    else:
        W = np.zeros((prob.control_rows, n_times))

    # With the default zero guess the first sweep doubles as the
    # uncontrolled reference; otherwise J_uc needs its own solve.
    J_uc = np.nan
    if np.any(W):
        zeros = np.zeros((prob.control_rows, n_times))
        J_uc = cost(prob, solve_state(prob, zeros, icfg), zeros)

    trace = []
    converged = False
    P = Q = None
    best_E = np.inf
    since_improvement = 0
    iterations = 0
    try:
        while iterations < ocfg.max_iter:
            P = solve_state(prob, W, icfg)
            iterations += 1
            if iterations == 1 and np.isnan(J_uc):
                J_uc = cost(prob, P, np.zeros_like(W))
            Q = solve_adjoint(prob, P, W, icfg)
            Wg = _gradient_field(prob, P.values, Q.values)
            E = error_measure(W, Wg, prob.grid, prob.timegrid)
            trace.append(E)
            if logger.isEnabledFor(logging.INFO):
                logger.info(
                    "sweep %d: E=%.6e J=%.6e", iterations, E, cost(prob, P, W)
                )
            if E < ocfg.opt_tol:
                converged = True
                break
            if E < best_E - STAGNATION_DECREASE:
                best_E = E
                since_improvement = 0
            else:
                since_improvement += 1
                if since_improvement >= STAGNATION_WINDOW:
                    logger.warning(
                        "aborting after %d sweeps without progress (E=%.3e)",
                        STAGNATION_WINDOW,
                        E,
                    )
                    break
            W = (1.0 - ocfg.mixing) * W + ocfg.mixing * Wg
    except DivergedSolveError as exc:
        raise DivergedSolveError(
            f"sweep {iterations + 1} diverged: {exc.reason}", exc.time
        ) from exc

    J_c = cost(prob, P, W)
    return OptimizationRun(
        P=P,
        Q=Q,
        W=SpaceTimeField(values=W),
        J_uc=float(J_uc),
        J_c=float(J_c),
        iterations=iterations,
        error_trace=np.asarray(trace),
        converged=converged,
    )


def _run_cell(prob, kappa, beta, ocfg, icfg, keep_fields) -> CellResult:
    try:
        run = fixed_point_solve(prob.variant(kappa=kappa, beta=beta), ocfg, icfg)
    except DivergedSolveError as exc:
        return CellResult(kappa=kappa, beta=beta, error=str(exc))
    return CellResult(
        kappa=kappa,
        beta=beta,
        J_uc=run.J_uc,
        J_c=run.J_c,
        iterations=run.iterations,
        converged=run.converged,
        run=run if keep_fields else None,
    )


def _run_cell_from_factory(args) -> CellResult:
    factory, kappa, beta, ocfg, icfg, keep_fields = args
    prob = factory(kappa, beta)
    return _run_cell(prob, kappa, beta, ocfg, icfg, keep_fields)


def sweep(
    prob: Optional[ControlProblem],
    kappas,
    betas,
    ocfg: OptimizerConfig = OptimizerConfig(),
    icfg: IntegratorConfig = IntegratorConfig(),
    jobs: int = 1,
    keep_fields: bool = False,
    problem_factory: Optional[Callable[[float, float], ControlProblem]] = None,
) -> list[CellResult]:
    """Independent fixed-point runs over the (kappa, beta) grid.

    Cells are (kappa, beta) variants of the base problem, or of
    problem_factory(kappa, beta) when one is given.  A failed cell is
    recorded with its error message and the sweep continues.  With jobs > 1
    the cells run in a process pool, which requires a picklable
    problem_factory.
    """
    kappas = list(kappas)
    betas = list(betas)
    if not kappas or not betas:
        raise ValueError("kappa and beta lists must be non-empty")
    if (prob is None) and (problem_factory is None):
        raise ValueError("need a base problem or a problem_factory")
    cells = [(k, b) for k in kappas for b in betas]
    if jobs > 1:
        if problem_factory is None:
            raise ValueError("parallel sweeps need a picklable problem_factory")
        args = [(problem_factory, k, b, ocfg, icfg, keep_fields) for k, b in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_from_factory, args))
    results = []
    for k, b in cells:
        if problem_factory is not None:
            results.append(
                _run_cell_from_factory((problem_factory, k, b, ocfg, icfg, keep_fields))
            )
        else:
            results.append(_run_cell(prob, k, b, ocfg, icfg, keep_fields))
    return results
