"""
Damped Newton minimization shared by the planar and periodic solvers.

A problem supplies the functional, its per-unit-area gradient and a Newton
direction; the driver does Armijo backtracking, halves the step whenever an
exponent overflows, and hands over to nonlinear conjugate gradients for one
round when a Newton direction cannot be made to descend.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .exceptions import DivergedIterateError, NonConvergenceError

logger = logging.getLogger(__name__)

OVERFLOW_EXPONENT = 700.0


def guard_exponent(phi):
    """Raise DivergedIterateError before np.exp would overflow."""
    top = float(np.max(phi)) if phi.size else 0.0
    if not top <= OVERFLOW_EXPONENT:
        raise DivergedIterateError(f"exponent {top:.6g} exceeds {OVERFLOW_EXPONENT:g}")


@dataclass
class LineSearchParameters:
    c_armijo: float = 1e-4
    max_backtracking_iter: int = 30
    # a step is taken whole once (g, d) is lost in the round-off of the functional
    roundoff_factor: float = 64.0


@dataclass
class NewtonResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    value_history: list = field(default_factory=list)
    mean_history: list = field(default_factory=list)
    fallbacks: int = 0
    roundoff_steps: int = 0
    wall_time: float = 0.0

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else math.nan


class ConvexProblem:
    """Interface of a strictly convex discrete functional over a flat vector."""

    #: weight turning a per-area gradient into the coordinate derivative
    cell_area = 1.0

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def newton_direction(self, x, grad, rtol):
        raise NotImplementedError

    def observe(self, x):
        """Optional per-iteration diagnostic (e.g. species means); None to skip."""
        return None


def _armijo(problem, x, f, gd, direction, params):
    alpha = 1.0
    scale = params.roundoff_factor * np.finfo(float).eps * max(1.0, abs(f))
    for backtrack in range(params.max_backtracking_iter):
        candidate = x + alpha * direction
        try:
            f_new = problem.value(candidate)
        except DivergedIterateError as exc:
            logger.debug("step %.3g diverged (%s); backtracking", alpha, exc)
            alpha *= 0.5
            continue
        if f_new <= f + params.c_armijo * alpha * gd:
            return candidate, f_new, alpha, backtrack
        if alpha == 1.0 and -gd <= scale and f_new - f <= scale:
            logger.debug("non-descent acceptance: I changed by %.3e within round-off %.3e", f_new - f, scale)
            return candidate, f_new, alpha, backtrack
        alpha *= 0.5
    return None, f, 0.0, params.max_backtracking_iter


def cg_fallback(problem, x, maxiter=50):
    """A bounded run of scipy's nonlinear CG from x; returns the improved point."""

    def fun(y):
        try:
            return problem.value(y)
        except DivergedIterateError:
            return np.inf

    def jac(y):
        return problem.gradient(y) * problem.cell_area

    res = optimize.minimize(fun, x, jac=jac, method="CG", options={"maxiter": maxiter, "gtol": 0.0})
    logger.warning("nonlinear CG fallback: %d iterations, %s", res.nit, res.message)
    return res.x


def minimize_newton(problem, x0, tol, max_iter, line_search=None, cg_coarse_tolerance=0.5):
    """
    Minimize problem from x0 until the sup-norm of the per-area gradient is <= tol.
    Raises NonConvergenceError with the residual history after max_iter iterations.
    """
    params = line_search or LineSearchParameters()
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    f = problem.value(x)
    result = NewtonResult(x=x, converged=False, iterations=0)
    gnorm_ini = None

    for it in range(max_iter + 1):
        grad = problem.gradient(x)
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        result.residual_history.append(gnorm)
        result.value_history.append(f)
        obs = problem.observe(x)
        if obs is not None:
            result.mean_history.append(obs)
        if gnorm_ini is None:
            gnorm_ini = max(gnorm, np.finfo(float).tiny)
        if gnorm <= tol:
            result.converged = True
            break
        if it == max_iter:
            break

        tolcg = min(cg_coarse_tolerance, math.sqrt(gnorm / gnorm_ini))
        direction = problem.newton_direction(x, grad, tolcg)
        gd = float(np.dot(grad, direction)) * problem.cell_area
        accepted = None
        if np.all(np.isfinite(direction)) and gd < 0.0:
            accepted, f_new, alpha, backtracks = _armijo(problem, x, f, gd, direction, params)
        if accepted is None:
            result.fallbacks += 1
            x = cg_fallback(problem, x)
            f = problem.value(x)
            logger.debug("iter %d: fallback, I=%.15g", it, f)
        else:
            if f_new > f:
                result.roundoff_steps += 1
            x, f = accepted, f_new
            logger.debug("iter %d: I=%.15g |g|=%.3e alpha=%.3g backtracks=%d tolcg=%.2e",
                         it, f, gnorm, alpha, backtracks, tolcg)
        result.iterations = it + 1

    result.x = x
    result.wall_time = time.perf_counter() - start
    if not result.converged:
        raise NonConvergenceError(
            f"no convergence after {result.iterations} iterations (|g|={result.final_residual:.3e}, tol={tol:.1e})",
            residual_history=result.residual_history,
            mean_history=result.mean_history,
        )
    logger.info("converged in %d iterations, |g|=%.3e, I=%.15g", result.iterations, result.final_residual, f)
    return result
