"""
Observables of converged states and the on-disk formats for reports and fields.

Report files are `key = value` lines after a schema line, in a fixed key order.
Field files are one ASCII header line `ROWS <ny> COLS <nx> DX <dx> DY <dy>`
followed by the row-major grid as little-endian float64.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .exceptions import DivergentFluxError, OutputError, UnsupportedParameterError
from .grids import TorusGrid, laplacian_periodic, neg_laplacian_disk

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "# schema abjm-vortex-report v1"
FIELD_DTYPE = np.dtype("<f8")


# ==============================================================================
# 1. REPORT RECORDS
# ==============================================================================
@dataclass
class ConvergenceRecord:
    method: str
    iterations: int
    final_residual: float
    converged: bool
    fallbacks: int = 0
    wall_time: float = 0.0


@dataclass
class SolveReport:
    kind: str
    m: int
    a: float
    lam: float
    k: float
    s: int
    nu: Optional[float]
    counts: np.ndarray
    grid_shape: tuple
    spacing: tuple
    domain_size: tuple
    quantized_integral_lhs: np.ndarray
    quantized_integral_target: np.ndarray
    quantized_integral_error: np.ndarray
    convergence: ConvergenceRecord
    flux_numeric: Optional[float] = None
    flux_closed_form: Optional[float] = None
    energy: Optional[float] = None
    magnetic_crosscheck: Optional[float] = None
    decay: Optional[object] = None
    torus: Optional[object] = None
    regularized_nodes: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def flux_discrepancy(self):
        if self.flux_numeric is None or self.flux_closed_form is None:
            return None
        return abs(self.flux_numeric - self.flux_closed_form) / max(abs(self.flux_closed_form), 1.0)

    def items(self, include_timing=False):
        """Ordered (key, value) pairs exactly as written to report.txt."""
        out = [
            ("kind", self.kind), ("m", self.m), ("N", self.m + 1), ("a", self.a),
            ("lambda", self.lam), ("mu", math.sqrt(self.lam) / 2.0), ("k", self.k), ("s", self.s),
            ("nu", self.nu), ("counts", self.counts), ("domain_size", self.domain_size),
            ("grid_shape", self.grid_shape), ("spacing", self.spacing),
            ("convergence.method", self.convergence.method),
            ("convergence.converged", self.convergence.converged),
            ("convergence.iterations", self.convergence.iterations),
            ("convergence.final_residual", self.convergence.final_residual),
            ("convergence.fallbacks", self.convergence.fallbacks),
            ("quantized_integral_lhs", self.quantized_integral_lhs),
            ("quantized_integral_target", self.quantized_integral_target),
            ("quantized_integral_error", self.quantized_integral_error),
            ("flux_numeric", self.flux_numeric), ("flux_closed_form", self.flux_closed_form),
            ("flux_discrepancy", self.flux_discrepancy), ("energy", self.energy),
            ("magnetic_crosscheck", self.magnetic_crosscheck),
            ("regularized_nodes", self.regularized_nodes),
        ]
        if self.decay is not None:
            d = self.decay
            out += [
                ("decay.skipped", d.skipped), ("decay.degenerate", d.degenerate),
                ("decay.sigma_fit", d.sigma_fit), ("decay.reference", d.reference),
                ("decay.passed", d.passed), ("decay.linearized_rate", d.linearized_rate),
                ("decay.gradient_sigma_fit", d.gradient_sigma), ("decay.gradient_reference", d.gradient_reference),
            ]
        if self.torus is not None:
            t = self.torus
            out += [
                ("torus.route", t.route), ("torus.K", t.K),
                ("torus.existence", t.existence.holds), ("torus.constraint_residuals", t.constraint_residuals),
                ("torus.functional_value", t.functional_value), ("torus.near_threshold", t.near_threshold),
            ]
        out += sorted(self.extras.items())
        if include_timing:
            out.append(("convergence.wall_time", self.convergence.wall_time))
        return out


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(format_value(v) for v in np.asarray(value).tolist()) if len(value) else ""
    return str(value)


# ==============================================================================
# 2. QUANTIZED INTEGRALS, MAGNETIC FIELD, FLUX AND ENERGY
# ==============================================================================
def quantized_integrals(state, cm, params, grid=None):
    """(computed, target): int (sum_j R_ij e^{u_j} - 1) and -4 pi n_i / lam."""
    grid = grid or state.grid
    integrand = np.tensordot(cm.R, state.exp_u, axes=1) - 1.0
    computed = grid.integrate(integrand)
    target = -4.0 * math.pi * np.asarray(state.counts, dtype=float) / params.lam
    return computed, target


def quantized_error(computed, target, lam):
    """|computed - target| relative to max(|target|, 4 pi / lam)."""
    return np.abs(computed - target) / np.maximum(np.abs(target), 4.0 * math.pi / lam)


def _regular_laplacian(state):
    """Discrete Laplacian of u with the vortex delta sources removed."""
    if isinstance(state.grid, TorusGrid):
        lap_v = laplacian_periodic(state.v, state.grid)
    else:
        lap_v = -neg_laplacian_disk(state.v, state.grid)
    return lap_v - state.source_density


def _mask(state, B):
    if isinstance(state.grid, TorusGrid):
        return B
    return np.where(state.grid.free, B, 0.0)


def magnetic_field(state, params):
    """Diagonal B_1..B_N by the recursion B_i = B_{i-1} + (s/2) Delta(regular) u_{i-1}."""
    mu2 = params.lam / 4.0
    lap_u = _regular_laplacian(state)
    B = np.empty((state.m + 1,) + state.u.shape[1:])
    B[0] = -2.0 * params.s * mu2 * params.a ** 2 * (state.exp_u[0] + 1.0)
    for i in range(1, state.m + 1):
        B[i] = B[i - 1] + 0.5 * params.s * lap_u[i - 1]
    return _mask(state, B)


def magnetic_field_direct(state, params):
    """B_ii = -2 s mu^2 (a^2 + i - 1)(e^{u_i} - e^{u_{i-1}} + 1) with f_0 = f_N = 0."""
    mu2 = params.lam / 4.0
    zero = np.zeros((1,) + state.u.shape[1:])
    upper = np.concatenate([state.exp_u, zero])
    lower = np.concatenate([zero, state.exp_u])
    level = params.a ** 2 + np.arange(state.m + 1, dtype=float)
    B = -2.0 * params.s * mu2 * level[:, None, None] * (upper - lower + 1.0)
    return _mask(state, B)


def magnetic_crosscheck(state, params):
    """Sup of the difference between the two B formulas, relative to sup |B|."""
    B = magnetic_field(state, params)
    scale = max(float(np.max(np.abs(B))), 1.0)
    return float(np.max(np.abs(B - magnetic_field_direct(state, params)))) / scale


def flux_closed_form(cm, params, n, area):
    N = params.m + 1
    n = np.asarray(n, dtype=float)
    mu2 = params.lam / 4.0
    row = cm.Rinv[0]
    steps = N - np.arange(1, params.m + 1)
    return (2.0 * N * params.a ** 2 * ((1.0 + row.sum()) * mu2 * area - math.pi * float(row @ n))
            + 2.0 * math.pi * float(steps @ n))


@dataclass(frozen=True)
class FluxResult:
    numeric: float
    closed_form: float

    @property
    def discrepancy(self):
        return abs(self.numeric - self.closed_form) / max(abs(self.closed_form), 1.0)


def total_flux(state, cm, params):
    """-s int Tr(B) next to its closed form; only finite on the torus."""
    if not isinstance(state.grid, TorusGrid):
        raise DivergentFluxError(
            "the flux over the whole plane diverges (B_1 tends to 2 a^2 mu^2 (r_1 + 1) at infinity); "
            "flux is only reported on the torus"
        )
    B = magnetic_field(state, params)
    numeric = -params.s * float(state.grid.integrate(B.sum(axis=0)))
    return FluxResult(numeric=numeric, closed_form=flux_closed_form(cm, params, state.counts, state.grid.area))


def energy_a0(params, n):
    """E = k mu sum_i (N - i) n_i, valid only at a = 0."""
    if params.a != 0:
        raise UnsupportedParameterError(f"the energy closed form holds only at a = 0, got a = {params.a}")
    n = np.asarray(n, dtype=float)
    steps = params.m + 1 - np.arange(1, params.m + 1)
    return params.k * params.mu * float(steps @ n)


def build_report(state, cm, params, convergence, nu=None, decay=None, torus=None, regularized_nodes=0):
    """Collect every observable of a converged state into a SolveReport."""
    computed, target = quantized_integrals(state, cm, params)
    grid = state.grid
    if isinstance(grid, TorusGrid):
        domain_size = (grid.L1, grid.L2)
        flux = total_flux(state, cm, params)
        flux_numeric, flux_cf = flux.numeric, flux.closed_form
    else:
        domain_size = (grid.radius,)
        flux_numeric = flux_cf = None
    energy = energy_a0(params, state.counts) if params.a == 0 else None
    report = SolveReport(
        kind=state.kind, m=params.m, a=params.a, lam=params.lam, k=params.k, s=params.s, nu=nu,
        counts=np.asarray(state.counts, dtype=float), grid_shape=grid.shape, spacing=(grid.dx, grid.dy),
        domain_size=domain_size, quantized_integral_lhs=computed, quantized_integral_target=target,
        quantized_integral_error=quantized_error(computed, target, params.lam), convergence=convergence,
        flux_numeric=flux_numeric, flux_closed_form=flux_cf, energy=energy,
        magnetic_crosscheck=magnetic_crosscheck(state, params), decay=decay, torus=torus,
        regularized_nodes=regularized_nodes,
    )
    logger.info("quantized integrals %s (targets %s)", computed, target)
    return report


# ==============================================================================
# 3. WRITERS AND READERS
# ==============================================================================
def profile_table(state):
    """Radial profile along +x on the disk, or the middle row of the torus cell."""
    grid = state.grid
    if isinstance(grid, TorusGrid):
        row = grid.ny // 2
        cols = np.arange(grid.nx)
        coord = cols * grid.dx
        label = "x"
    else:
        row = grid.n // 2
        cols = np.flatnonzero((grid.x >= 0.0) & grid.free[row])
        coord = np.hypot(grid.x[cols], grid.x[row])
        label = "r"
    table = {label: coord}
    for i in range(state.m):
        table[f"u_{i + 1}"] = state.u[i, row, cols]
    for i in range(state.m):
        table[f"exp_u_{i + 1}"] = state.exp_u[i, row, cols]
    return pd.DataFrame(table)


def _field_header(grid):
    ny, nx = grid.shape
    return f"ROWS {ny} COLS {nx} DX {format(grid.dx, '.17g')} DY {format(grid.dy, '.17g')}\n"


def write_field(path, values, grid):
    try:
        with open(path, "wb") as fh:
            fh.write(_field_header(grid).encode("ascii"))
            fh.write(np.ascontiguousarray(values, dtype=FIELD_DTYPE).tobytes())
    except OSError as exc:
        raise OutputError(path, str(exc)) from exc


def read_field(path):
    """Returns (array of shape (rows, cols), dx, dy)."""
    try:
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii").split()
            payload = fh.read()
    except OSError as exc:
        raise OutputError(path, str(exc)) from exc
    if len(header) != 8 or header[0::2] != ["ROWS", "COLS", "DX", "DY"]:
        raise OutputError(path, f"malformed field header {' '.join(header)!r}")
    rows, cols = int(header[1]), int(header[3])
    data = np.frombuffer(payload, dtype=FIELD_DTYPE)
    if data.size != rows * cols:
        raise OutputError(path, f"expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols), float(header[5]), float(header[7])


def write_report(path, report, include_timing=False):
    lines = [REPORT_SCHEMA]
    lines += [f"{key} = {format_value(value)}" for key, value in report.items(include_timing)]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(path, str(exc)) from exc


def read_report(path):
    """Parse report.txt back into an ordered dict of raw string values."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OutputError(path, str(exc)) from exc
    if not lines or lines[0] != REPORT_SCHEMA:
        raise OutputError(path, "missing report schema line")
    out = {}
    for line in lines[1:]:
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def write_outputs(state, report, dest, include_timing=False):
    """report.txt, u_i.bin / exp_u_i.bin for every species, and profile.csv under dest."""
    try:
        os.makedirs(dest, exist_ok=True)
    except OSError as exc:
        raise OutputError(dest, str(exc)) from exc
    written = []
    path = os.path.join(dest, "report.txt")
    write_report(path, report, include_timing)
    written.append(path)
    for i in range(state.m):
        for name, values in ((f"u_{i + 1}.bin", state.u[i]), (f"exp_u_{i + 1}.bin", state.exp_u[i])):
            path = os.path.join(dest, name)
            write_field(path, values, state.grid)
            written.append(path)
    path = os.path.join(dest, "profile.csv")
    try:
        profile_table(state).to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise OutputError(path, str(exc)) from exc
    written.append(path)
    logger.info("wrote %d files to %s", len(written), dest)
    return written
