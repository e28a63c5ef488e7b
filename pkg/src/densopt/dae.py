"""Adaptive implicit multistep integrator for semi-explicit DAEs.

Integrates M y' = F(y, t) where M is a diagonal 0/1 mass matrix: rows with
zero mass are algebraic constraints (here: boundary conditions), enforced by
the Newton corrector at every step.  The method is the variable-order
(1..5) BDF family with the standard stabilizing modification of the leading
coefficients, fixed-leading-coefficient implementation on a backward
difference array, quasi-constant step sizes, and reuse of both the Jacobian
and the LU factorization of the iteration matrix across steps.

Dense output between steps comes from the backward-difference interpolating
polynomial, which is how trajectory columns are produced at the requested
(Chebyshev) output times without constraining the step sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = ["DivergedSolveError", "IntegrationStats", "integrate_dae"]

MAX_ORDER = 5
NEWTON_MAXITER = 4
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
EPS = float(np.finfo(float).eps)

# Leading-coefficient modifiers; order 1..5 plus zero guards.
_KAPPA = np.array([0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0])
_GAMMA = np.hstack((0.0, np.cumsum(1.0 / np.arange(1, MAX_ORDER + 1))))
_ALPHA = (1.0 - _KAPPA) * _GAMMA
_ERROR_CONST = _KAPPA * _GAMMA + 1.0 / np.arange(1, MAX_ORDER + 2)


class DivergedSolveError(RuntimeError):
    """Integration failed (step-size underflow or persistent non-finite
    values); carries the time at which the failure occurred."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g}")
        self.reason = message
        self.time = float(time)


@dataclass
class IntegrationStats:
    n_steps: int = 0
    n_rhs: int = 0
    n_jac: int = 0
    n_lu: int = 0
    n_rejected: int = 0


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _change_matrix(order: int, factor: float) -> np.ndarray:
    """Triangular transform rescaling the difference array to a new step."""
    idx = np.arange(1, order + 1)
    M = np.zeros((order + 1, order + 1))
    M[1:, 1:] = (idx[:, None] - 1 - factor * idx[None, :]) / idx[:, None]
    M[0] = 1.0
    return np.cumprod(M, axis=0)


def _rescale_D(D: np.ndarray, order: int, factor: float) -> None:
    R = _change_matrix(order, factor)
    U = _change_matrix(order, 1.0)
    D[: order + 1] = (R @ U).T @ D[: order + 1]


def _interpolate(D: np.ndarray, order: int, t_new: float, h: float, t: float):
    """Evaluate the interpolating polynomial of the last step at t."""
    if order == 0 or t == t_new:
        return D[0].copy()
    j = np.arange(order)
    x = (t - (t_new - j * h)) / ((j + 1) * h)
    return D[0] + np.cumprod(x) @ D[1 : order + 1]


class _BdfDae:
    def __init__(self, rhs, jac, y0, t0, t_bound, diff_mask, rtol, atol, max_step):
        self.rhs = rhs
        self.jac = jac
        self.n = y0.size
        self.t = float(t0)
        self.t_bound = float(t_bound)
        self.mass = np.asarray(diff_mask, dtype=float)
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step
        self.newton_tol = max(10 * EPS / rtol, min(0.03, rtol**0.5))
        self.stats = IntegrationStats()

        f0 = self._eval_rhs(y0, self.t)
        if f0 is None:
            raise DivergedSolveError("right-hand side not finite at start", self.t)
        h0 = self._initial_step(y0, f0)
        self.h_abs = h0
        self.order = 1
        self.n_equal_steps = 0
        self.D = np.zeros((MAX_ORDER + 3, self.n))
        self.D[0] = y0
        self.D[1] = h0 * f0 * self.mass
        self.J = None
        self.LU = None
        self.current_jac = False

    # -- plumbing ---------------------------------------------------------

    def _eval_rhs(self, y, t):
        self.stats.n_rhs += 1
        try:
            f = self.rhs(y, t)
        except ArithmeticError:
            return None
        if not np.all(np.isfinite(f)):
            return None
        return f

    def _eval_jac(self, y, t):
        self.stats.n_jac += 1
        try:
            if self.jac is not None:
                return np.asarray(self.jac(y, t), dtype=float)
            return self._fd_jac(y, t)
        except ArithmeticError:
            return None

    def _fd_jac(self, y, t):
        f0 = self.rhs(y, t)
        self.stats.n_rhs += 1 + self.n
        J = np.empty((self.n, self.n))
        for j in range(self.n):
            dyj = np.sqrt(EPS) * max(abs(y[j]), 1.0)
            yp = y.copy()
            yp[j] += dyj
            J[:, j] = (self.rhs(yp, t) - f0) / dyj
        return J

    def _factorize(self, c):
        A = (-c) * self.J
        A.flat[:: self.n + 1] += self.mass
        self.stats.n_lu += 1
        return lu_factor(A, overwrite_a=True, check_finite=False)

    def _initial_step(self, y0, f0):
        span = abs(self.t_bound - self.t)
        scale = self.atol + self.rtol * np.abs(y0)
        fm = f0 * self.mass
        d0 = _rms(y0 / scale)
        d1 = _rms(fm / scale)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, span)
        y1 = y0 + h0 * fm
        f1 = self._eval_rhs(y1, self.t + h0)
        if f1 is None:
            return min(h0 * 1e-3, span)
        d2 = _rms((f1 - f0) * self.mass / scale) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.5
        return min(100 * h0, h1, span, self.max_step)

    # -- corrector --------------------------------------------------------

    def _corrector(self, t_new, y_predict, c, psi, scale):
        d = np.zeros(self.n)
        y = y_predict.copy()
        dy_norm_old = None
        converged = False
        k = 0
        for k in range(NEWTON_MAXITER):
            f = self._eval_rhs(y, t_new)
            if f is None:
                break
            res = c * f - self.mass * (psi + d)
            dy = lu_solve(self.LU, res, check_finite=False)
            dy_norm = _rms(dy / scale)
            if not np.isfinite(dy_norm):
                break
            rate = None if dy_norm_old is None else dy_norm / dy_norm_old
            if rate is not None and (
                rate >= 1
                or rate ** (NEWTON_MAXITER - k) / (1 - rate) * dy_norm > self.newton_tol
            ):
                break
            y = y + dy
            d = d + dy
            if dy_norm == 0 or (
                rate is not None and rate / (1 - rate) * dy_norm < self.newton_tol
            ):
                converged = True
                break
            dy_norm_old = dy_norm
        return converged, k + 1, y, d

    # -- one accepted step --------------------------------------------------

    def step(self):
        """Advance one accepted step; returns the new time."""
        t = self.t
        D = self.D
        min_step = 16 * EPS * max(abs(t), 1e-3 * abs(self.t_bound - t), 1e-30)
        if self.h_abs > self.max_step:
            factor = self.max_step / self.h_abs
            _rescale_D(D, self.order, factor)
            self.h_abs = self.max_step
            self.n_equal_steps = 0
            self.LU = None

        while True:
            if self.h_abs < min_step:
                raise DivergedSolveError("step size underflow", t)
            h = self.h_abs
            t_new = t + h
            # Land exactly on the end point (with an eps-snap so a hair-short
            # step cannot strand the solver just before t_bound).
            if t_new >= self.t_bound - 4 * EPS * max(abs(self.t_bound), 1.0):
                t_new = self.t_bound
                factor = (t_new - t) / h
                _rescale_D(D, self.order, factor)
                self.n_equal_steps = 0
                self.LU = None
                h = t_new - t
                self.h_abs = h

            order = self.order
            y_predict = D[: order + 1].sum(axis=0)
            scale = self.atol + self.rtol * np.abs(y_predict)
            psi = _GAMMA[1 : order + 1] @ D[1 : order + 1] / _ALPHA[order]
            c = h / _ALPHA[order]

            converged = False
            n_iter = NEWTON_MAXITER
            while not converged:
                if self.J is None:
                    self.J = self._eval_jac(y_predict, t_new)
                    self.current_jac = True
                    if self.J is None:
                        break
                if self.LU is None:
                    self.LU = self._factorize(c)
                converged, n_iter, y_new, d = self._corrector(
                    t_new, y_predict, c, psi, scale
                )
                if converged:
                    break
                if self.current_jac:
                    break
                self.J = self._eval_jac(y_predict, t_new)
                self.current_jac = True
                self.LU = None
                if self.J is None:
                    break

            if not converged:
                self.stats.n_rejected += 1
                self.h_abs *= 0.5
                _rescale_D(D, order, 0.5)
                self.n_equal_steps = 0
                self.LU = None
                continue

            safety = 0.9 * (2 * NEWTON_MAXITER + 1) / (2 * NEWTON_MAXITER + n_iter)
            error = _ERROR_CONST[order] * d
            error_norm = _rms(error / scale)
            if error_norm > 1:
                self.stats.n_rejected += 1
                factor = max(MIN_FACTOR, safety * error_norm ** (-1 / (order + 1)))
                self.h_abs *= factor
                _rescale_D(D, order, factor)
                self.n_equal_steps = 0
                self.LU = None
                continue
            break

        self.stats.n_steps += 1
        self.n_equal_steps += 1
        self.t = t_new
        self.current_jac = False

        D[order + 2] = d - D[order + 1]
        D[order + 1] = d
        for i in reversed(range(order + 1)):
            D[i] += D[i + 1]

        if self.n_equal_steps >= order + 1:
            self._adapt(d, scale, safety)
        # After a possible rescale, (D, order, h_abs) still describe the same
        # interpolating polynomial anchored at t_new.
        return t_new

    def _adapt(self, d, scale, safety):
        order = self.order
        D = self.D
        if order > 1:
            error_m_norm = _rms(_ERROR_CONST[order - 1] * D[order] / scale)
        else:
            error_m_norm = np.inf
        if order < MAX_ORDER:
            error_p_norm = _rms(_ERROR_CONST[order + 1] * D[order + 2] / scale)
        else:
            error_p_norm = np.inf
        error_norm = _rms(_ERROR_CONST[order] * d / scale)
        norms = np.array([error_m_norm, error_norm, error_p_norm])
        with np.errstate(divide="ignore"):
            factors = norms ** (-1.0 / np.arange(order, order + 3))
        delta_order = int(np.argmax(factors)) - 1
        factor = min(MAX_FACTOR, safety * np.max(factors))
        # Quasi-constant steps: hold h (and the LU) unless the change pays.
        if delta_order == 0 and 0.95 <= factor < 1.25:
            self.n_equal_steps = 0
            return
        self.order = order + delta_order
        self.h_abs *= factor
        _rescale_D(D, self.order, factor)
        self.n_equal_steps = 0
        self.LU = None


def integrate_dae(
    rhs: Callable[[np.ndarray, float], np.ndarray],
    y0: np.ndarray,
    t0: float,
    t_bound: float,
    output_times: np.ndarray,
    diff_mask: np.ndarray,
    rtol: float = 1e-8,
    atol: float = 1e-8,
    max_step: float = np.inf,
    jac: Optional[Callable[[np.ndarray, float], np.ndarray]] = None,
) -> tuple[np.ndarray, IntegrationStats]:
    """Integrate M y' = rhs(y, t) from t0 to t_bound.

    diff_mask is True on differential rows and False on algebraic rows.
    output_times must be strictly increasing within (t0, t_bound]; the
    returned array has one column per output time.  jac(y, t) is the
    Jacobian of rhs; when omitted it is formed by forward differences.
    """
    y0 = np.asarray(y0, dtype=float)
    output_times = np.asarray(output_times, dtype=float)
    if output_times.size and (
        output_times[0] <= t0 or output_times[-1] > t_bound + 1e-12 * abs(t_bound)
    ):
        raise ValueError("output times must lie in (t0, t_bound]")
    solver = _BdfDae(rhs, jac, y0, t0, t_bound, diff_mask, rtol, atol, max_step)
    out = np.empty((y0.size, output_times.size))
    k = 0
    while solver.t < t_bound and k < output_times.size:
        t_new = solver.step()
        while k < output_times.size and output_times[k] <= t_new:
            out[:, k] = _interpolate(
                solver.D, solver.order, t_new, solver.h_abs, output_times[k]
            )
            k += 1
    # Leftover outputs can only be fp-coincident with the landing time.
    while k < output_times.size:
        out[:, k] = solver.D[0]
        k += 1
    return out, solver.stats
