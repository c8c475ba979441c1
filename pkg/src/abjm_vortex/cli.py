"""Command-line front end: matrix, check, solve and scan."""
import logging
import os
from typing import Annotated, Optional

import numpy as np
import typer

from .config import RunConfig
from .diagnostics import write_outputs
from .exceptions import ConfigError, NonexistenceError, VortexSolverError
from .matrix_core import check_torus_existence, coupling_matrix, torus_threshold
from .planar_solver import solve_planar
from .torus_solver import constrained_solve_torus, solve_torus, threshold_scan

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NONEXISTENCE = 2

app = typer.Typer(
    name="abjm-vortex",
    help="Multiple-vortex solutions of the reduced ABJM BPS system on the plane and the torus.",
    add_completion=False,
)


@app.callback()
def main_options(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log solver progress at DEBUG level")] = False,
):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _fmt(x):
    return f"{x:.12g}"


def _vector(v):
    return "(" + ", ".join(_fmt(float(x)) for x in v) + ")"


def _echo_matrix(name, M):
    typer.echo(f"{name} =")
    for row in np.atleast_2d(M):
        typer.echo("  [" + "  ".join(f"{float(x):>20.12g}" for x in row) + " ]")


def _load(config):
    try:
        return RunConfig.from_yaml(config)
    except ConfigError as exc:
        typer.echo(f"❌ Invalid config {config}: {exc}", err=True)
        raise typer.Exit(EXIT_FAILURE)


# ==============================================================================
# COMMANDS
# ==============================================================================
@app.command()
def matrix(
    a: Annotated[float, typer.Option("--a", help="Deformation parameter a >= 0")],
    m: Annotated[int, typer.Option("--m", help="Number of species m = N - 1 >= 2")],
):
    """Print R, its Cholesky factor, R^-1, r, the leading minors and lambda_0."""
    try:
        cm = coupling_matrix(a, m)
    except VortexSolverError as exc:
        raise typer.BadParameter(str(exc))
    typer.echo(f"a = {_fmt(a)}, m = {m}, N = {m + 1}")
    _echo_matrix("R", cm.R)
    _echo_matrix("L", cm.L)
    _echo_matrix("L^-1", cm.Linv)
    _echo_matrix("R^-1", cm.Rinv)
    typer.echo(f"r = {_vector(cm.r)}")
    typer.echo(f"minors = {_vector(cm.minors)}")
    typer.echo(f"lambda0 = {_fmt(cm.lambda0)}")


@app.command()
def check(
    config: Annotated[str, typer.Option("--config", "-c", help="Path to a torus YAML config")],
):
    """Evaluate the sharp existence conditions of a torus configuration."""
    cfg = _load(config)
    try:
        if cfg.domain.kind != "torus":
            raise ConfigError("domain.kind", "existence conditions apply to the torus only")
        params = cfg.params()
        grid = cfg.build_grid(params)
        n = cfg.vortex_config().counts
        result = check_torus_existence(params, n, grid.area)
        threshold = torus_threshold(params, n, grid.area)
    except VortexSolverError as exc:
        typer.echo(f"❌ {exc}", err=True)
        raise typer.Exit(EXIT_FAILURE)

    typer.echo(f"m = {params.m}, a = {_fmt(params.a)}, lambda = {_fmt(params.lam)}, |Omega| = {_fmt(grid.area)}")
    typer.echo(f"n = {_vector(n)}")
    for i, (lhs, rhs, ok) in enumerate(zip(result.lhs, result.rhs, result.holds), start=1):
        mark = "holds" if ok else "FAILS"
        typer.echo(f"  [{i}] 4 pi sum_j (R^-1)_{i}j n_j = {_fmt(lhs)} < lambda |Omega| r_{i} = {_fmt(rhs)} : {mark}")
    typer.echo(f"K = {_vector(result.K)}")
    typer.echo(f"lambda* = {_fmt(threshold)}")
    if result.exists:
        typer.echo("✅ All existence conditions hold.")
        raise typer.Exit(EXIT_OK)
    typer.echo(f"❌ Existence fails at index {', '.join(map(str, result.failed_indices))}.")
    raise typer.Exit(EXIT_FAILURE)


@app.command()
def solve(
    config: Annotated[str, typer.Option("--config", "-c", help="Path to a YAML config")],
    out: Annotated[Optional[str], typer.Option("--out", "-o", help="Output directory (overrides config)")] = None,
    timing: Annotated[bool, typer.Option("--timing", help="Include wall time in the report")] = False,
):
    """Solve on the disk or torus and write report.txt, field files and profile.csv."""
    cfg = _load(config)
    dest = out or cfg.output or "output"
    try:
        params = cfg.params()
        vortices = cfg.vortex_config()
        if cfg.domain.kind == "disk":
            params, grid = cfg.disk_setup(params)
        else:
            grid = cfg.build_grid(params)
        solver = cfg.solver
        if cfg.domain.kind == "torus":
            route = constrained_solve_torus if solver.route == "constrained" else solve_torus
            state, report = route(vortices, params, grid, solver.tol, solver.max_iter)
        else:
            state, report = solve_planar(vortices, params, grid, solver.tol, solver.max_iter, solver.boundary)
        write_outputs(state, report, dest, include_timing=timing)
    except NonexistenceError as exc:
        typer.echo(f"❌ {exc}", err=True)
        for i, (lhs, rhs) in enumerate(zip(exc.certificate.lhs, exc.certificate.rhs), start=1):
            typer.echo(f"  [{i}] lhs = {_fmt(lhs)} rhs = {_fmt(rhs)} K = {_fmt(exc.certificate.K[i - 1])}", err=True)
        raise typer.Exit(EXIT_NONEXISTENCE)
    except VortexSolverError as exc:
        typer.echo(f"❌ {type(exc).__name__}: {exc}", err=True)
        raise typer.Exit(EXIT_FAILURE)
    except Exception as exc:
        typer.echo(f"🔥 Unexpected error: {exc}", err=True)
        raise typer.Exit(EXIT_FAILURE)

    conv = report.convergence
    typer.echo(f"✅ Converged in {conv.iterations} iterations (|g| = {conv.final_residual:.3e}).")
    for i, (lhs, target) in enumerate(zip(report.quantized_integral_lhs, report.quantized_integral_target), start=1):
        typer.echo(f"  quantized integral {i}: {_fmt(lhs)} (target {_fmt(target)})")
    if report.flux_numeric is not None:
        typer.echo(f"  flux: {_fmt(report.flux_numeric)} (closed form {_fmt(report.flux_closed_form)})")
    if report.decay is not None and not report.decay.skipped:
        mark = "✅" if report.decay.passed else "⚠️"
        typer.echo(f"  {mark} decay rate {_fmt(report.decay.sigma_fit)} vs sqrt(lambda lambda0) = {_fmt(report.decay.reference)}")
    typer.echo(f"Results written to {dest}")


def parse_range(text):
    """'lo:hi:steps' -> increasing array of `steps` values."""
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise typer.BadParameter(f"expected lo:hi:steps, got {text!r}")
    if steps < 1 or (steps > 1 and not hi > lo) or not lo > 0:
        raise typer.BadParameter(f"need 0 < lo < hi and steps >= 1, got {text!r}")
    return np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])


@app.command()
def scan(
    config: Annotated[str, typer.Option("--config", "-c", help="Path to a torus YAML config")],
    value_range: Annotated[str, typer.Option("--range", help="lo:hi:steps")],
    param: Annotated[str, typer.Option("--param", help="Parameter to scan: lambda or area")] = "lambda",
    out: Annotated[Optional[str], typer.Option("--out", "-o", help="Output directory")] = None,
):
    """Scan lambda or the cell area across the existence threshold; writes scan.csv."""
    if param not in ("lambda", "area"):
        raise typer.BadParameter(f"--param must be lambda or area, got {param!r}")
    values = parse_range(value_range)
    cfg = _load(config)
    dest = out or cfg.output or "output"
    try:
        if cfg.domain.kind != "torus":
            raise ConfigError("domain.kind", "scans run on the torus only")
        params = cfg.params()
        table = threshold_scan(cfg.vortex_config(), params, cfg.build_grid(params), values, param,
                               cfg.solver.tol, cfg.solver.max_iter)
        os.makedirs(dest, exist_ok=True)
        path = os.path.join(dest, "scan.csv")
        table.to_csv(path, index=False, float_format="%.17g")
    except VortexSolverError as exc:
        typer.echo(f"❌ {exc}", err=True)
        raise typer.Exit(EXIT_FAILURE)
    except OSError as exc:
        typer.echo(f"❌ Could not write {dest}: {exc}", err=True)
        raise typer.Exit(EXIT_FAILURE)

    feasible = int(table["verdict"].sum())
    typer.echo(f"✅ Scanned {len(table)} values of {param}: {feasible} feasible, {len(table) - feasible} certified infeasible.")
    typer.echo(f"Results written to {path}")


def main():
    app()


if __name__ == "__main__":
    main()
