"""
Uniform Cartesian grids shared by the planar and periodic solvers.

Fields are stored as arrays of shape (m, ny, nx): species first, then rows (y),
then columns (x).
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .exceptions import ConfigError


# ==============================================================================
# 1. DISK GRID (square lattice masked to an open disk)
# ==============================================================================
@dataclass(frozen=True, eq=False)
class DiskGrid:
    """n x n nodes on [-radius, radius]^2; nodes with |x| < radius are unknowns."""
    radius: float
    n: int
    x: np.ndarray = field(init=False, repr=False)
    free: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("domain.radius", f"must be positive, got {self.radius}")
        if int(self.n) != self.n or self.n < 8:
            raise ConfigError("domain.grid", f"need at least 8 nodes per axis, got {self.n}")
        x = np.linspace(-self.radius, self.radius, self.n)
        X, Y = np.meshgrid(x, x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "free", X * X + Y * Y < self.radius * self.radius)

    @property
    def spacing(self):
        return 2.0 * self.radius / (self.n - 1)

    @property
    def dx(self):
        return self.spacing

    @property
    def dy(self):
        return self.spacing

    @property
    def cell_area(self):
        return self.spacing ** 2

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def n_free(self):
        return int(self.free.sum())

    def mesh(self):
        return np.meshgrid(self.x, self.x)

    def integrate(self, f):
        """Midpoint quadrature over the free nodes; leading axes are kept."""
        return np.sum(np.where(self.free, f, 0.0), axis=(-2, -1)) * self.cell_area

    def contains(self, point):
        return math.hypot(point[0], point[1]) < self.radius


def dirichlet_energy_disk(W, grid):
    """Sum over lattice edges touching a free node of (w_p - w_q)^2, per species."""
    free = grid.free
    ex = free[:, 1:] | free[:, :-1]
    ey = free[1:, :] | free[:-1, :]
    dx = np.diff(W, axis=-1)
    dy = np.diff(W, axis=-2)
    return np.sum(np.where(ex, dx * dx, 0.0), axis=(-2, -1)) + np.sum(np.where(ey, dy * dy, 0.0), axis=(-2, -1))


def neg_laplacian_disk(W, grid):
    """-Delta_h W at free nodes (zero elsewhere); every free node has four neighbours in the array."""
    out = np.zeros_like(W)
    core = (4.0 * W[..., 1:-1, 1:-1] - W[..., 2:, 1:-1] - W[..., :-2, 1:-1]
            - W[..., 1:-1, 2:] - W[..., 1:-1, :-2]) / grid.cell_area
    out[..., 1:-1, 1:-1] = core
    return np.where(grid.free, out, 0.0)


def free_laplacian_matrix(grid):
    """Sparse -Delta_h restricted to free nodes (fixed neighbours moved to the right-hand side)."""
    n = grid.n
    idx = -np.ones(grid.shape, dtype=np.int64)
    rows, cols = np.nonzero(grid.free)
    idx[rows, cols] = np.arange(rows.size)
    inv_h2 = 1.0 / grid.cell_area
    I = [np.arange(rows.size)]
    J = [np.arange(rows.size)]
    V = [np.full(rows.size, 4.0 * inv_h2)]
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        rr, cc = rows + dr, cols + dc
        inside = (rr >= 0) & (rr < n) & (cc >= 0) & (cc < n)
        nb = np.full(rows.size, -1, dtype=np.int64)
        nb[inside] = idx[rr[inside], cc[inside]]
        keep = nb >= 0
        I.append(np.flatnonzero(keep))
        J.append(nb[keep])
        V.append(np.full(int(keep.sum()), -inv_h2))
    return sparse.csr_matrix(
        (np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
        shape=(rows.size, rows.size),
    )


# ==============================================================================
# 2. TORUS GRID (periodic rectangular cell)
# ==============================================================================
@dataclass(frozen=True)
class TorusGrid:
    """nx x ny periodic nodes at (i dx, j dy) on the cell [0, L1) x [0, L2)."""
    L1: float
    L2: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0):
            raise ConfigError("domain.L1", f"cell sides must be positive, got {self.L1}, {self.L2}")
        for name, value in (("nx", self.nx), ("ny", self.ny)):
            if int(value) != value or value < 4 or value % 2:
                raise ConfigError("domain.grid", f"{name} must be an even integer >= 4, got {value}")

    @property
    def dx(self):
        return self.L1 / self.nx

    @property
    def dy(self):
        return self.L2 / self.ny

    @property
    def area(self):
        return self.L1 * self.L2

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def shape(self):
        return (self.ny, self.nx)

    def mesh(self):
        return np.meshgrid(np.arange(self.nx) * self.dx, np.arange(self.ny) * self.dy)

    def integrate(self, f):
        return np.sum(f, axis=(-2, -1)) * self.cell_area

    def nearest_node(self, point):
        """(row, col) of the node nearest to a point, ties toward the lower index, wrapped."""
        col = math.ceil(point[0] / self.dx - 0.5) % self.nx
        row = math.ceil(point[1] / self.dy - 0.5) % self.ny
        return row, col


def laplacian_periodic(W, grid):
    """Five-point periodic Laplacian along the last two axes."""
    return ((np.roll(W, 1, axis=-1) - 2.0 * W + np.roll(W, -1, axis=-1)) / grid.dx ** 2
            + (np.roll(W, 1, axis=-2) - 2.0 * W + np.roll(W, -1, axis=-2)) / grid.dy ** 2)


def dirichlet_energy_periodic(W, grid):
    """Discrete int |grad w|^2 per species (forward differences, every periodic edge)."""
    ex = np.roll(W, -1, axis=-1) - W
    ey = np.roll(W, -1, axis=-2) - W
    return (np.sum(ex * ex, axis=(-2, -1)) * (grid.dy / grid.dx)
            + np.sum(ey * ey, axis=(-2, -1)) * (grid.dx / grid.dy))


def laplacian_symbol(grid):
    """Eigenvalues of the periodic five-point Laplacian on the fft2 frequency lattice, shape (ny, nx)."""
    kx = np.fft.fftfreq(grid.nx) * grid.nx
    ky = np.fft.fftfreq(grid.ny) * grid.ny
    sx = -(4.0 / grid.dx ** 2) * np.sin(np.pi * kx / grid.nx) ** 2
    sy = -(4.0 / grid.dy ** 2) * np.sin(np.pi * ky / grid.ny) ** 2
    return sy[:, None] + sx[None, :]


def solve_poisson_periodic(f, grid):
    """Zero-mean solution of Delta_h u = f; the mean of f is discarded."""
    symbol = laplacian_symbol(grid)
    symbol[0, 0] = 1.0
    f_hat = np.fft.fft2(f)
    u_hat = f_hat / symbol
    u_hat[..., 0, 0] = 0.0
    return np.real(np.fft.ifft2(u_hat))


# ==============================================================================
# 3. GRID-SAMPLED SOLUTION STATE
# ==============================================================================
@dataclass
class FieldState:
    """w, v = Lw, u and e^u on a DiskGrid or TorusGrid, each of shape (m, ny, nx)."""
    grid: object
    w: np.ndarray
    v: np.ndarray
    u: np.ndarray
    exp_u: np.ndarray
    # smooth part of the background source: Delta u0 = 4 pi (deltas) - source_density
    source_density: np.ndarray
    counts: np.ndarray
    residual_norm: float = math.nan

    @property
    def kind(self):
        return "torus" if isinstance(self.grid, TorusGrid) else "disk"

    @property
    def m(self):
        return self.w.shape[0]

    def integrate(self, f):
        return self.grid.integrate(f)
