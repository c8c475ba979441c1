"""
Doubly periodic vortex solutions on a rectangular cell.

With u = u0 + v, v = L w and b = L^-1 1 - (4 pi / (lam |Omega|)) L^-1 n, solutions are
the critical points of

    I(w) = 1/(2 lam) sum_i int |grad w_i|^2 + sum_i int e^{u0_i + (Lw)_i} - sum_i int b_i w_i.

Integrating the equations forces int e^{u_i} = K_i with K = |Omega| R^-1 1 - (4 pi/lam) R^-1 n,
so a solution exists exactly when every K_i is positive.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.sparse import linalg as sparse_linalg
from tqdm import tqdm

from .diagnostics import ConvergenceRecord, build_report
from .exceptions import ConfigError, NonexistenceError, VortexSolverError
from .grids import FieldState, TorusGrid, dirichlet_energy_periodic, laplacian_periodic, laplacian_symbol
from .matrix_core import check_torus_existence, coupling_matrix
from .newton import ConvexProblem, guard_exponent, minimize_newton
from .vortex_sources import torus_background

logger = logging.getLogger(__name__)

NEAR_THRESHOLD_RATIO = 0.05
NEAR_THRESHOLD_MAX_ITER = 2000
CG_MAX_ITER = 400


@dataclass
class TorusSolveReport:
    K: np.ndarray
    constraint_residuals: np.ndarray
    existence: object
    converged: bool
    iterations: int
    functional_value: float
    near_threshold: bool = False
    route: str = "direct"
    mean_history: list = field(default_factory=list)


# ==============================================================================
# 1. THE DIRECT FUNCTIONAL
# ==============================================================================
def b_vector(cm, params, n, area):
    n = np.asarray(n, dtype=float)
    return cm.Linv @ (np.ones(cm.m) - (4.0 * math.pi / (params.lam * area)) * n)


def functional_torus(W, bg, cm, params, grid, b=None):
    """Discrete I for periodic fields W of shape (m, ny, nx)."""
    b = b_vector(cm, params, bg.counts, grid.area) if b is None else b
    phi = bg.u0 + np.tensordot(cm.L, W, axes=1)
    guard_exponent(phi)
    density = np.sum(np.exp(phi)) - np.sum(b[:, None, None] * W)
    return float(dirichlet_energy_periodic(W, grid).sum() / (2.0 * params.lam) + density * grid.cell_area)


def gradient_torus(W, bg, cm, params, grid, b=None):
    """Per-unit-area gradient (1/lam)(-Delta_h w) + L^T e^{u0 + Lw} - b."""
    b = b_vector(cm, params, bg.counts, grid.area) if b is None else b
    phi = bg.u0 + np.tensordot(cm.L, W, axes=1)
    guard_exponent(phi)
    return (-laplacian_periodic(W, grid) / params.lam
            + np.tensordot(cm.L.T, np.exp(phi), axes=1) - b[:, None, None])


class SpectralPreconditioner:
    """Inverse of (|k|_h^2 / lam) I + L^T diag(e_bar) L mode by mode, e_bar a per-species mean weight."""

    def __init__(self, grid, cm, lam, e_bar, project=False):
        self.shape = (cm.m,) + grid.shape
        symbol = -laplacian_symbol(grid) / lam
        coupling = cm.L.T @ np.diag(e_bar) @ cm.L
        M = symbol[:, :, None, None] * np.eye(cm.m) + coupling
        if project:
            M[0, 0] = np.eye(cm.m)
        self.inverse = np.linalg.inv(M)
        self.project = project

    def __call__(self, r):
        r_hat = np.fft.fft2(r.reshape(self.shape))
        z_hat = np.einsum("yxij,jyx->iyx", self.inverse, r_hat)
        if self.project:
            z_hat[:, 0, 0] = 0.0
        return np.real(np.fft.ifft2(z_hat)).ravel()


def _cg(matvec, rhs, precond, rtol):
    n = rhs.size
    A = sparse_linalg.LinearOperator((n, n), matvec=matvec, dtype=float)
    M = sparse_linalg.LinearOperator((n, n), matvec=precond, dtype=float)
    d, info = sparse_linalg.cg(A, rhs, rtol=rtol, maxiter=CG_MAX_ITER, M=M)
    if info != 0:
        logger.debug("cg stopped with info=%d", info)
    return d


class TorusProblem(ConvexProblem):
    """functional_torus over all grid values, flattened species-major."""

    def __init__(self, bg, cm, params, grid, n):
        self.bg, self.cm, self.params, self.grid = bg, cm, params, grid
        self.shape = (cm.m,) + grid.shape
        self.b = b_vector(cm, params, n, grid.area)
        self.cell_area = grid.cell_area

    def value(self, x):
        return functional_torus(x.reshape(self.shape), self.bg, self.cm, self.params, self.grid, self.b)

    def gradient(self, x):
        return gradient_torus(x.reshape(self.shape), self.bg, self.cm, self.params, self.grid, self.b).ravel()

    def newton_direction(self, x, grad, rtol):
        L = self.cm.L
        E = np.exp(self.bg.u0 + np.tensordot(L, x.reshape(self.shape), axes=1))

        def hess(p):
            P = p.reshape(self.shape)
            out = -laplacian_periodic(P, self.grid) / self.params.lam
            out += np.tensordot(L.T, E * np.tensordot(L, P, axes=1), axes=1)
            return out.ravel()

        precond = SpectralPreconditioner(self.grid, self.cm, self.params.lam, E.mean(axis=(-2, -1)))
        return _cg(hess, -grad, precond, rtol)

    def observe(self, x):
        return np.tensordot(self.cm.L, x.reshape(self.shape), axes=1).mean(axis=(-2, -1)).tolist()


# ==============================================================================
# 2. THE CONSTRAINED (MEAN-FREE) FUNCTIONAL
# ==============================================================================
class ConstrainedTorusProblem(ConvexProblem):
    """
    Mean-free w with the species means eliminated through int e^{u_i} = K_i:
    I(w) = 1/(2 lam) sum int |grad w|^2 + sum_i K_i ln J_i(w),  J_i = int e^{u0_i + (Lw)_i}.
    """

    def __init__(self, bg, cm, params, grid, K):
        self.bg, self.cm, self.params, self.grid = bg, cm, params, grid
        self.shape = (cm.m,) + grid.shape
        self.K = np.asarray(K, dtype=float)
        self.cell_area = grid.cell_area

    def _exp_and_J(self, W):
        phi = self.bg.u0 + np.tensordot(self.cm.L, W, axes=1)
        guard_exponent(phi)
        E = np.exp(phi)
        return E, self.grid.integrate(E)

    def value(self, x):
        W = x.reshape(self.shape)
        _, J = self._exp_and_J(W)
        return float(dirichlet_energy_periodic(W, self.grid).sum() / (2.0 * self.params.lam)
                     + np.sum(self.K * np.log(J)))

    def weights(self, W):
        E, J = self._exp_and_J(W)
        return (self.K / J)[:, None, None] * E

    def gradient(self, x):
        W = x.reshape(self.shape)
        q = self.weights(W)
        grad = -laplacian_periodic(W, self.grid) / self.params.lam + np.tensordot(self.cm.L.T, q, axes=1)
        return (grad - grad.mean(axis=(-2, -1), keepdims=True)).ravel()

    def newton_direction(self, x, grad, rtol):
        L = self.cm.L
        q = self.weights(x.reshape(self.shape))

        def hess(p):
            P = p.reshape(self.shape)
            LP = np.tensordot(L, P, axes=1)
            coupled = q * LP - q * (self.grid.integrate(q * LP) / self.K)[:, None, None]
            out = -laplacian_periodic(P, self.grid) / self.params.lam + np.tensordot(L.T, coupled, axes=1)
            return (out - out.mean(axis=(-2, -1), keepdims=True)).ravel()

        precond = SpectralPreconditioner(self.grid, self.cm, self.params.lam, self.K / self.grid.area, project=True)
        return _cg(hess, -grad, precond, rtol)

    def means(self, x):
        """v-bar_i = ln K_i - ln J_i for the mean-free iterate x."""
        _, J = self._exp_and_J(x.reshape(self.shape))
        return np.log(self.K) - np.log(J)

    def observe(self, x):
        return self.means(x).tolist()


# ==============================================================================
# 3. SOLVES
# ==============================================================================
def _certify(cfg, params, grid, cm):
    if cfg.m != cm.m:
        raise ConfigError("vortices", f"expected {cm.m} vortex lists, got {cfg.m}")
    check = check_torus_existence(params, cfg.counts, grid.area, cm)
    if not check.exists:
        failed = ", ".join(str(i) for i in check.failed_indices)
        raise NonexistenceError(
            f"no periodic solution: existence condition fails for index {failed} (K = {check.K})", check
        )
    return check


def _iteration_cap(check, grid, cm, max_iter):
    ratio = float(np.min(check.K / (grid.area * cm.r)))
    if ratio < NEAR_THRESHOLD_RATIO:
        logger.warning("near the existence threshold (min K_i/(|Omega| r_i) = %.3g); raising the cap to %d",
                       ratio, NEAR_THRESHOLD_MAX_ITER)
        return max(max_iter, NEAR_THRESHOLD_MAX_ITER), True
    return max_iter, False


def _torus_state(W, bg, cm, grid, counts, residual):
    V = np.tensordot(cm.L, W, axes=1)
    U = bg.u0 + V
    rho = (4.0 * math.pi * np.asarray(counts, dtype=float) / grid.area)[:, None, None] * np.ones(U.shape)
    return FieldState(grid=grid, w=W, v=V, u=U, exp_u=np.exp(U), source_density=rho,
                      counts=np.asarray(counts, dtype=float), residual_norm=residual)


def _finish(state, bg, cm, params, grid, check, result, near, route, value):
    residuals = np.abs(grid.integrate(state.exp_u) - check.K) / np.abs(check.K)
    torus = TorusSolveReport(
        K=check.K, constraint_residuals=residuals, existence=check, converged=result.converged,
        iterations=result.iterations, functional_value=value, near_threshold=near, route=route,
        mean_history=result.mean_history,
    )
    convergence = ConvergenceRecord(
        method="newton-cg" if result.fallbacks == 0 else "newton-cg+cg",
        iterations=result.iterations, final_residual=result.final_residual,
        converged=result.converged, fallbacks=result.fallbacks, wall_time=result.wall_time,
    )
    report = build_report(state, cm, params, convergence, torus=torus)
    report.extras["background_residual"] = bg.source_residual
    return state, report


def solve_torus(cfg, params, grid, tol=1e-10, max_iter=500, cm=None):
    """
    Certify existence, then minimize functional_torus by Newton-CG with a spectral
    preconditioner. Raises NonexistenceError carrying the certificate when some K_i <= 0.
    """
    cm = cm or coupling_matrix(params.a, params.m)
    check = _certify(cfg, params, grid, cm)
    cap, near = _iteration_cap(check, grid, cm, max_iter)
    bg = torus_background(cfg, grid)

    # exact for n = 0: the constant v with int e^{u0_i + v_i} = K_i
    v_bar = np.log(check.K) - np.log(grid.integrate(bg.exp_u0))
    W0 = np.broadcast_to((cm.Linv @ v_bar)[:, None, None], (cm.m,) + grid.shape).copy()
    problem = TorusProblem(bg, cm, params, grid, cfg.counts)
    logger.info("torus solve: m=%d a=%g lambda=%g grid %dx%d", params.m, params.a, params.lam, grid.nx, grid.ny)
    result = minimize_newton(problem, W0.ravel(), tol, cap)

    W = result.x.reshape(problem.shape)
    state = _torus_state(W, bg, cm, grid, cfg.counts, result.final_residual)
    return _finish(state, bg, cm, params, grid, check, result, near, "direct", problem.value(result.x))


def constrained_solve_torus(cfg, params, grid, tol=1e-10, max_iter=500, cm=None):
    """Minimize over mean-free fields and recover the means from the natural constraints."""
    cm = cm or coupling_matrix(params.a, params.m)
    check = _certify(cfg, params, grid, cm)
    cap, near = _iteration_cap(check, grid, cm, max_iter)
    bg = torus_background(cfg, grid)

    problem = ConstrainedTorusProblem(bg, cm, params, grid, check.K)
    logger.info("constrained torus solve: m=%d a=%g lambda=%g", params.m, params.a, params.lam)
    result = minimize_newton(problem, np.zeros(cm.m * grid.nx * grid.ny), tol, cap)

    W = result.x.reshape(problem.shape) + (cm.Linv @ problem.means(result.x))[:, None, None]
    state = _torus_state(W, bg, cm, grid, cfg.counts, result.final_residual)
    value = TorusProblem(bg, cm, params, grid, cfg.counts).value(W.ravel())
    return _finish(state, bg, cm, params, grid, check, result, near, "constrained", value)


# ==============================================================================
# 4. SCANS ACROSS THE EXISTENCE THRESHOLD
# ==============================================================================
def _scaled_grid(grid, area):
    factor = math.sqrt(area / grid.area)
    return TorusGrid(grid.L1 * factor, grid.L2 * factor, grid.nx, grid.ny)


def threshold_scan(cfg, params, grid, values, param="lambda", tol=1e-10, max_iter=500, progress=True):
    """
    One row per value of lambda (or cell area, keeping the aspect ratio): the
    existence verdict and, on the feasible side, the converged observables.
    """
    if param not in ("lambda", "area"):
        raise ConfigError("scan.param", f"must be 'lambda' or 'area', got {param!r}")
    values = [float(v) for v in values]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("scan.range", "values must be strictly increasing")
    cm = coupling_matrix(params.a, params.m)
    rows = []
    for value in tqdm(values, desc=f"Scanning {param}", disable=not progress):
        p = params.with_lambda(value) if param == "lambda" else params
        g = _scaled_grid(grid, value) if param == "area" else grid
        check = check_torus_existence(p, cfg.counts, g.area, cm)
        row = {param: value, "lambda": p.lam, "area": g.area, "verdict": check.exists,
               "failed_indices": " ".join(str(i) for i in check.failed_indices)}
        for i, K in enumerate(check.K):
            row[f"K_{i + 1}"] = K
        if check.exists:
            try:
                state, report = solve_torus(cfg, p, g, tol, max_iter, cm)
                for i in range(cm.m):
                    row[f"residual_{i + 1}"] = report.torus.constraint_residuals[i]
                    row[f"min_u_{i + 1}"] = float(state.u[i].min())
                    row[f"max_u_{i + 1}"] = float(state.u[i].max())
                    row[f"min_exp_u_{i + 1}"] = float(state.exp_u[i].min())
                row["functional"] = report.torus.functional_value
                row["iterations"] = report.convergence.iterations
                row["converged"] = True
            except VortexSolverError as exc:
                logger.warning("%s=%g failed: %s", param, value, exc)
                row["converged"] = False
                row["error"] = str(exc)
        rows.append(row)
    table = pd.DataFrame(rows)
    _log_monotonicity(table, cm.m)
    return table


def _log_monotonicity(table, m):
    for i in range(m):
        column = f"min_exp_u_{i + 1}"
        if column not in table:
            continue
        series = table[column].dropna()
        if len(series) > 1 and not series.is_monotonic_increasing:
            logger.info("min e^{u_%d} is not monotone along the scan", i + 1)
