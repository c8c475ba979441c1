"""
Prescribed vortex sets and the background functions that carry their singularities.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, VortexSolverError
from .grids import laplacian_periodic, solve_poisson_periodic

logger = logging.getLogger(__name__)

MAX_NU_DOUBLINGS = 60
H_TILDE_BOUND = 0.5


# ==============================================================================
# 1. VORTEX CONFIGURATION
# ==============================================================================
@dataclass(frozen=True)
class VortexConfiguration:
    """m lists of vortex points; a repeated point is a higher-multiplicity vortex."""
    points: tuple

    @classmethod
    def from_lists(cls, lists):
        pts = []
        for i, species in enumerate(lists):
            entries = []
            try:
                for p in species or ():
                    if len(p) != 2:
                        raise ConfigError(f"vortices[{i}]", f"points need two coordinates, got {p!r}")
                    x, y = float(p[0]), float(p[1])
                    if not (math.isfinite(x) and math.isfinite(y)):
                        raise ConfigError(f"vortices[{i}]", f"coordinates must be finite, got {p!r}")
                    entries.append((x, y))
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"vortices[{i}]", f"points must be [x, y] pairs of numbers ({exc})") from None
            pts.append(tuple(entries))
        return cls(tuple(pts))

    @classmethod
    def empty(cls, m):
        return cls(tuple(() for _ in range(m)))

    @property
    def m(self):
        return len(self.points)

    @property
    def counts(self):
        return np.array([len(p) for p in self.points], dtype=float)

    @property
    def max_abs(self):
        return max((math.hypot(*p) for species in self.points for p in species), default=0.0)

    def shifted(self, dx, dy):
        return VortexConfiguration(tuple(tuple((x + dx, y + dy) for x, y in s) for s in self.points))

    def doubled(self):
        return VortexConfiguration(tuple(s + s for s in self.points))


def _check_species(cfg, cm):
    if cfg.m != cm.m:
        raise ConfigError("vortices", f"expected {cm.m} vortex lists, got {cfg.m}")


# ==============================================================================
# 2. PLANAR BACKGROUND
# ==============================================================================
@dataclass(frozen=True)
class PlanarBackground:
    u0: np.ndarray       # finite everywhere except regularized nodes
    exp_u0: np.ndarray   # exact, zero at a vortex node
    g: np.ndarray
    h_tilde: np.ndarray
    nu: float
    regularized_nodes: tuple = ()


def h_tilde(g, cm, lam):
    """(1/(lam r_i)) sum_j (R^-1)_ji g_j, stacked over species."""
    weighted = np.tensordot(cm.Rinv.T, g, axes=1)
    return weighted / (lam * cm.r[:, None, None])


def planar_background(cfg, grid, nu, cm, lam):
    """u0, e^{u0}, g and h-tilde on the full square lattice of a DiskGrid."""
    _check_species(cfg, cm)
    if not nu > 0:
        raise ConfigError("solver.nu", f"must be positive, got {nu}")
    for i, species in enumerate(cfg.points):
        for p in species:
            if not grid.contains(p):
                raise ConfigError(f"vortices[{i}]", f"point {p} lies outside the disk of radius {grid.radius}")

    X, Y = grid.mesh()
    shape = (cfg.m,) + grid.shape
    u0 = np.zeros(shape)
    exp_u0 = np.ones(shape)
    g = np.zeros(shape)
    eps2 = grid.cell_area / 2.0  # squared half cell diagonal
    flagged = []
    for i, species in enumerate(cfg.points):
        for px, py in species:
            d2 = (X - px) ** 2 + (Y - py) ** 2
            hit = d2 == 0.0
            if np.any(hit):
                for row, col in zip(*np.nonzero(hit)):
                    flagged.append((i, int(row), int(col)))
                    logger.warning("vortex %s of species %d sits on node (%d, %d); regularizing u0 there",
                                   (px, py), i + 1, row, col)
            exp_u0[i] *= d2 / (d2 + nu)
            u0[i] -= np.log1p(nu / np.where(hit, eps2, d2))
            g[i] += 4.0 * nu / (nu + d2) ** 2
    return PlanarBackground(u0=u0, exp_u0=exp_u0, g=g, h_tilde=h_tilde(g, cm, lam),
                            nu=float(nu), regularized_nodes=tuple(flagged))


def autotune_nu(cfg, grid, params, cm):
    """Smallest nu in 1, 2, 4, ... with sup |h-tilde| <= 1/2 on the grid."""
    _check_species(cfg, cm)
    if not cfg.counts.any():
        return 1.0
    X, Y = grid.mesh()
    d2 = [[(X - px) ** 2 + (Y - py) ** 2 for px, py in species] for species in cfg.points]
    nu = 1.0
    previous = math.inf
    for step in range(MAX_NU_DOUBLINGS + 1):
        g = np.zeros((cfg.m,) + grid.shape)
        for i, dists in enumerate(d2):
            for d in dists:
                g[i] += 4.0 * nu / (nu + d) ** 2
        sup = float(np.max(np.abs(h_tilde(g, cm, params.lam))))
        logger.debug("nu=%g sup|h_tilde|=%.6g", nu, sup)
        if sup > previous:
            logger.warning("sup|h_tilde| increased from %.6g to %.6g at nu=%g", previous, sup, nu)
        if sup <= H_TILDE_BOUND:
            logger.info("tuned nu=%g after %d doublings (sup|h_tilde|=%.6g)", nu, step, sup)
            return nu
        previous = sup
        nu *= 2.0
    raise VortexSolverError(f"sup|h_tilde| still above {H_TILDE_BOUND} after {MAX_NU_DOUBLINGS} doublings of nu")


# ==============================================================================
# 3. TORUS BACKGROUND
# ==============================================================================
@dataclass(frozen=True)
class TorusBackground:
    u0: np.ndarray
    exp_u0: np.ndarray
    source: np.ndarray
    source_residual: float
    counts: np.ndarray


def discrete_deltas(cfg, grid):
    """Per species, the sum of 1/cellArea spikes at the nearest node of each vortex."""
    deltas = np.zeros((cfg.m,) + grid.shape)
    for i, species in enumerate(cfg.points):
        for p in species:
            row, col = grid.nearest_node(p)
            deltas[i, row, col] += 1.0 / grid.cell_area
    return deltas


def torus_background(cfg, grid):
    """Zero-mean u0 solving Delta_h u0 = 4 pi sum(deltas) - 4 pi n/|Omega| exactly on the lattice."""
    n = cfg.counts
    source = 4.0 * math.pi * discrete_deltas(cfg, grid) - (4.0 * math.pi * n / grid.area)[:, None, None]
    u0 = solve_poisson_periodic(source, grid)
    u0 -= u0.mean(axis=(-2, -1), keepdims=True)
    scale = max(float(np.max(np.abs(source))), 1.0)
    residual = float(np.max(np.abs(laplacian_periodic(u0, grid) - source))) / scale
    logger.debug("torus background residual %.3g", residual)
    return TorusBackground(u0=u0, exp_u0=np.exp(u0), source=source, source_residual=residual, counts=n)
