"""
Planar vortex solutions on a truncated disk.

With u_i = u0_i + ln r_i + v_i and v = L w the system becomes the Euler-Lagrange
equation of the strictly convex functional

    I(w) = 1/(2 lam) sum_i int |grad w_i|^2 + sum_i int h_i w_i
           + sum_i int r_i (e^{u0_i + (Lw)_i} - e^{u0_i} - (Lw)_i),    h = L^-1 g / lam,

which is minimized over the free nodes of a DiskGrid by damped Newton.
"""
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .diagnostics import ConvergenceRecord, build_report
from .exceptions import ConfigError, FitDegenerateWarning
from .grids import DiskGrid, FieldState, dirichlet_energy_disk, free_laplacian_matrix, neg_laplacian_disk
from .matrix_core import coupling_matrix, linearized_decay_rate
from .newton import ConvexProblem, guard_exponent, minimize_newton
from .vortex_sources import autotune_nu, planar_background

logger = logging.getLogger(__name__)

BOUNDARY_MODES = ("exact", "zero")
DECAY_PASS_FRACTION = 0.85
DECAY_FLOOR = 1e-14


# ==============================================================================
# 1. GRID SELECTION
# ==============================================================================
def default_disk_grid(cfg, params, cm=None, nu=None):
    """
    Radius max(20/sqrt(lam lam0), 3 max|p|, 5 sqrt(nu)) and spacing at most
    0.2/sqrt(lam lam0); the node count per axis is even so the origin is a cell centre.
    """
    cm = cm or coupling_matrix(params.a, params.m)
    scale = math.sqrt(params.lam * cm.lambda0)
    radius = max(20.0 / scale, 3.0 * cfg.max_abs, 5.0 * math.sqrt(nu or 1.0))
    n = int(math.ceil(2.0 * radius * scale / 0.2)) + 1
    n += n % 2
    return DiskGrid(radius=radius, n=n)


# ==============================================================================
# 2. THE DISCRETE FUNCTIONAL
# ==============================================================================
def boundary_values(bg, cm, grid, boundary="exact"):
    """w on the fixed nodes: -L^-1 u0 (so u_i = ln r_i there) or literally zero."""
    if boundary not in BOUNDARY_MODES:
        raise ConfigError("solver.boundary", f"must be one of {BOUNDARY_MODES}, got {boundary!r}")
    W = np.zeros(bg.u0.shape)
    if boundary == "exact":
        fixed = ~grid.free
        W[:, fixed] = -(cm.Linv @ bg.u0[:, fixed])
    return W


def _phi(W, cm):
    return np.tensordot(cm.L, W, axes=1)


def functional_I(W, bg, cm, params, grid):
    """Discrete I for a full field W of shape (m, n, n); fixed nodes enter only through the gradient term."""
    free = grid.free
    phi = _phi(W, cm)[:, free]
    guard_exponent(phi)
    exp_u0 = bg.exp_u0[:, free]
    h = np.tensordot(cm.Linv, bg.g[:, free], axes=1) / params.lam
    r = cm.r[:, None]
    density = np.sum(h * W[:, free]) + np.sum(r * (exp_u0 * np.exp(phi) - exp_u0 - phi))
    return float(dirichlet_energy_disk(W, grid).sum() / (2.0 * params.lam) + density * grid.cell_area)


def gradient_I(W, bg, cm, params, grid):
    """
    Per-unit-area gradient (1/lam)(-Delta_h w) + h + L^T diag(r)(e^{u0 + Lw} - 1) on free nodes,
    zero on fixed nodes. Multiply by the cell area for the coordinate derivative of functional_I.
    """
    phi = _phi(W, cm)
    guard_exponent(phi[:, grid.free])
    E = bg.exp_u0 * np.exp(np.where(grid.free, phi, 0.0))
    h = np.tensordot(cm.Linv, bg.g, axes=1) / params.lam
    coupling = np.tensordot(cm.L.T, cm.r[:, None, None] * (E - 1.0), axes=1)
    grad = neg_laplacian_disk(W, grid) / params.lam + h + coupling
    return np.where(grid.free, grad, 0.0)


def planar_residual_v(V, bg, cm, params, grid):
    """(Delta_h v - lam (R e^u - 1) - g) / lam on free nodes, computed directly in v."""
    guard_exponent(V[:, grid.free])
    exp_u = cm.r[:, None, None] * bg.exp_u0 * np.exp(np.where(grid.free, V, 0.0))
    residual = -neg_laplacian_disk(V, grid) - params.lam * (np.tensordot(cm.R, exp_u, axes=1) - 1.0) - bg.g
    return np.where(grid.free, residual, 0.0) / params.lam


class PlanarProblem(ConvexProblem):
    """functional_I over the free-node values, flattened species-major."""

    def __init__(self, bg, cm, params, grid, boundary="exact"):
        self.bg, self.cm, self.params, self.grid = bg, cm, params, grid
        self.boundary = boundary_values(bg, cm, grid, boundary)
        self.cell_area = grid.cell_area
        self.m = cm.m
        self.n_free = grid.n_free
        self.laplacian = free_laplacian_matrix(grid)

    def full(self, x):
        W = self.boundary.copy()
        W[:, self.grid.free] = x.reshape(self.m, self.n_free)
        return W

    def value(self, x):
        return functional_I(self.full(x), self.bg, self.cm, self.params, self.grid)

    def gradient(self, x):
        return gradient_I(self.full(x), self.bg, self.cm, self.params, self.grid)[:, self.grid.free].ravel()

    def hessian(self, x):
        """(1/lam)(-Delta_h) on each species plus L^T diag(r e^{u0+Lw}) L node by node."""
        W = self.full(x)
        free = self.grid.free
        E = self.bg.exp_u0[:, free] * np.exp(_phi(W, self.cm)[:, free])
        weights = self.cm.r[:, None] * E
        L = self.cm.L
        lap = self.laplacian / self.params.lam
        blocks = [[None] * self.m for _ in range(self.m)]
        for i in range(self.m):
            for j in range(self.m):
                diag = np.einsum("k,k,kp->p", L[:, i], L[:, j], weights)
                block = sparse.diags(diag)
                blocks[i][j] = block + lap if i == j else block
        return sparse.bmat(blocks, format="csc")

    def newton_direction(self, x, grad, rtol):
        return sparse_linalg.spsolve(self.hessian(x), -grad)


# ==============================================================================
# 3. SOLVE
# ==============================================================================
def _planar_state(W, bg, cm, grid, counts, residual):
    V = np.tensordot(cm.L, W, axes=1)
    U = bg.u0 + np.log(cm.r)[:, None, None] + V
    exp_u = cm.r[:, None, None] * bg.exp_u0 * np.exp(V)
    return FieldState(grid=grid, w=W, v=V, u=U, exp_u=exp_u, source_density=bg.g,
                      counts=counts, residual_norm=residual)


def solve_planar(cfg, params, grid=None, tol=1e-10, max_iter=500, boundary="exact", w0=None, cm=None):
    """
    Minimize functional_I on the disk. Returns (FieldState, SolveReport).
    w0 optionally supplies the starting free-node values as a full (m, n, n) field.
    """
    cm = cm or coupling_matrix(params.a, params.m)
    nu = params.nu
    if grid is None:
        provisional = default_disk_grid(cfg, params, cm, nu)
        nu = nu or autotune_nu(cfg, provisional, params, cm)
        grid = default_disk_grid(cfg, params, cm, nu)
    if nu is None:
        nu = autotune_nu(cfg, grid, params, cm)
    spacing_limit = 0.2 / math.sqrt(params.lam * cm.lambda0)
    resolved = grid.spacing <= spacing_limit * (1.0 + 1e-12)
    if not resolved:
        logger.warning("grid spacing %.4g exceeds the decay-resolving limit %.4g; solving anyway",
                       grid.spacing, spacing_limit)

    bg = planar_background(cfg, grid, nu, cm, params.lam)
    problem = PlanarProblem(bg, cm, params, grid, boundary)
    x0 = np.zeros(cm.m * grid.n_free) if w0 is None else np.asarray(w0)[:, grid.free].ravel()
    logger.info("planar solve: m=%d a=%g lambda=%g, %d unknowns, nu=%g", params.m, params.a, params.lam, x0.size, nu)
    result = minimize_newton(problem, x0, tol, max_iter)

    state = _planar_state(problem.full(result.x), bg, cm, grid, cfg.counts, result.final_residual)
    convergence = ConvergenceRecord(
        method="newton" if result.fallbacks == 0 else "newton+cg",
        iterations=result.iterations, final_residual=result.final_residual,
        converged=result.converged, fallbacks=result.fallbacks, wall_time=result.wall_time,
    )
    fit = decay_fit(state, cm, params, cfg)
    report = build_report(state, cm, params, convergence, nu=nu, decay=fit,
                          regularized_nodes=len(bg.regularized_nodes))
    report.extras["boundary"] = boundary
    report.extras["spacing_limit"] = spacing_limit
    report.extras["spacing_resolved"] = resolved
    report.extras["transform_residual"] = float(np.max(np.abs(planar_residual_v(state.v, bg, cm, params, grid))))
    return state, report


# ==============================================================================
# 4. DECAY AT LARGE |x|
# ==============================================================================
@dataclass(frozen=True)
class DecayFit:
    sigma_fit: float
    reference: float
    passed: bool
    gradient_sigma: float
    gradient_reference: float
    linearized_rate: float
    skipped: bool = False
    degenerate: bool = False


def _fit_slope(radius, values):
    keep = values > DECAY_FLOOR
    if keep.sum() < 8:
        return math.nan
    slope, _ = np.polyfit(radius[keep], np.log(values[keep]), 1)
    return -float(slope)


def decay_fit(state, cm, params, cfg=None):
    """
    Least-squares slope of ln sum_i (u_i - ln r_i)^2 against |x| over the annulus
    0.5 R <= |x| <= 0.9 R; passes when it reaches 0.85 sqrt(lam lam0).
    The same fit of ln sum_i |grad u_i|^2 is reported against sqrt(lam lam0 r0).
    """
    grid = state.grid
    reference = math.sqrt(params.lam * cm.lambda0)
    grad_reference = math.sqrt(params.lam * cm.lambda0 * float(cm.r.min()))
    linearized = linearized_decay_rate(cm, params.lam)
    if not np.any(state.counts):
        return DecayFit(math.nan, reference, True, math.nan, grad_reference, linearized, skipped=True)
    if cfg is not None and cfg.max_abs >= 0.5 * grid.radius:
        raise ConfigError("domain.radius", "the decay annulus must not contain vortices; enlarge the radius")

    X, Y = grid.mesh()
    rad = np.hypot(X, Y)
    annulus = grid.free & (rad >= 0.5 * grid.radius) & (rad <= 0.9 * grid.radius)
    deviation = np.sum((state.u - np.log(cm.r)[:, None, None]) ** 2, axis=0)
    gy, gx = np.gradient(state.u, grid.spacing, axis=(-2, -1))
    grad_sq = np.sum(gx * gx + gy * gy, axis=0)

    sigma = _fit_slope(rad[annulus], deviation[annulus])
    grad_sigma = _fit_slope(rad[annulus], grad_sq[annulus])
    if math.isnan(sigma):
        warnings.warn(
            "deviation from ln r is below 1e-14 over the decay annulus; use a smaller radius",
            FitDegenerateWarning,
        )
        logger.warning("degenerate decay fit on radius %.4g", grid.radius)
        return DecayFit(math.nan, reference, False, grad_sigma, grad_reference, linearized, degenerate=True)
    passed = sigma >= DECAY_PASS_FRACTION * reference
    logger.info("decay fit sigma=%.6g reference=%.6g linearized=%.6g passed=%s", sigma, reference, linearized, passed)
    return DecayFit(sigma, reference, bool(passed), grad_sigma, grad_reference, linearized)
