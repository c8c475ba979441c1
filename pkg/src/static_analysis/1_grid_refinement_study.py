# Import necessary libraries
import math
import os
import sys

import numpy as np
import pandas as pd
from tqdm import tqdm

# ==============================================================================
# 1. PATHS
# ==============================================================================
try:
    base_path = os.path.dirname(os.path.abspath(__file__))
    project_root = os.path.dirname(os.path.dirname(base_path))
except NameError:
    project_root = "../.."

sys.path.insert(0, os.path.join(project_root, "src"))
OUTPUT_DIR = os.path.join(project_root, "outputs")
os.makedirs(OUTPUT_DIR, exist_ok=True)

from abjm_vortex.exceptions import VortexSolverError  # noqa: E402
from abjm_vortex.grids import DiskGrid, TorusGrid  # noqa: E402
from abjm_vortex.matrix_core import ModelParams  # noqa: E402
from abjm_vortex.planar_solver import solve_planar  # noqa: E402
from abjm_vortex.torus_solver import solve_torus  # noqa: E402
from abjm_vortex.vortex_sources import VortexConfiguration  # noqa: E402

# ==============================================================================
# 2. STUDY SETUP
# ==============================================================================
# radius 12 keeps the truncation error below the discretization error at every spacing
PLANAR_RADIUS = 12.0
PLANAR_NODES = [60, 120, 240]
TORUS_NODES = [16, 32, 64, 128]

planar_params = ModelParams(m=2, a=0.0, lam=4.0, nu=2.0)
planar_vortices = VortexConfiguration.from_lists([[(0.0, 0.0)], []])

torus_params = ModelParams(m=2, a=1.0, lam=4.0)
torus_vortices = VortexConfiguration.from_lists([[(0.5, 0.5)], [(1.5, 1.0)]])

# ==============================================================================
# 3. PLANAR REFINEMENT (quantized integrals)
# ==============================================================================
print("Refining the disk grid for one vortex at the origin (m=2, a=0, lambda=4)...")
rows = []
for n in tqdm(PLANAR_NODES, desc="Disk grids"):
    grid = DiskGrid(PLANAR_RADIUS, n)
    try:
        _, report = solve_planar(planar_vortices, planar_params, grid=grid, tol=1e-12)
    except VortexSolverError as e:
        print(f"⚠️ n={n} failed: {e}")
        continue
    rows.append({
        "domain": "disk", "nodes": n, "spacing": grid.spacing,
        "quantized_error_1": report.quantized_integral_error[0],
        "quantized_error_2": report.quantized_integral_error[1],
        "iterations": report.convergence.iterations,
        "decay_sigma_fit": report.decay.sigma_fit,
        "flux_discrepancy": math.nan,
    })

# ==============================================================================
# 4. TORUS REFINEMENT (flux and natural constraints)
# ==============================================================================
print("Refining the torus grid for a=1, n=(1,1) on a 2x2 cell...")
for n in tqdm(TORUS_NODES, desc="Torus grids"):
    grid = TorusGrid(2.0, 2.0, n, n)
    try:
        _, report = solve_torus(torus_vortices, torus_params, grid)
    except VortexSolverError as e:
        print(f"⚠️ n={n} failed: {e}")
        continue
    rows.append({
        "domain": "torus", "nodes": n, "spacing": grid.dx,
        "quantized_error_1": report.quantized_integral_error[0],
        "quantized_error_2": report.quantized_integral_error[1],
        "iterations": report.convergence.iterations,
        "decay_sigma_fit": math.nan,
        "flux_discrepancy": report.flux_discrepancy,
    })

# ==============================================================================
# 5. RESULTS
# ==============================================================================
results = pd.DataFrame(rows)
if results.empty:
    print("❌ No grid converged; nothing to write.")
    sys.exit(1)

disk = results[results["domain"] == "disk"]
if len(disk) > 1:
    for column in ("quantized_error_1", "quantized_error_2"):
        errors = disk[column].to_numpy()
        orders = np.log2(errors[:-1] / errors[1:])
        print(f"Observed order of {column}: {', '.join(f'{o:.2f}' for o in orders)}")

output_path = os.path.join(OUTPUT_DIR, "1_grid_refinement.csv")
results.to_csv(output_path, index=False, float_format="%.17g")
print(results.to_string(index=False))
print(f"✅ Results written to {output_path}")
