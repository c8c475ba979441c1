# Import necessary libraries
import os
import sys

import numpy as np
import pandas as pd

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

from abjm_vortex.grids import TorusGrid  # noqa: E402
from abjm_vortex.matrix_core import ModelParams, torus_threshold  # noqa: E402
from abjm_vortex.torus_solver import threshold_scan  # noqa: E402
from abjm_vortex.vortex_sources import VortexConfiguration  # noqa: E402

# ==============================================================================
# 2. STUDY SETUP
# ==============================================================================
# one vortex of species 1 on the unit cell; lambda* has a closed form for each a
DEFORMATIONS = [0.0, 0.5, 1.0]
FACTORS = np.linspace(0.8, 1.6, 9)
grid = TorusGrid(1.0, 1.0, 32, 32)
vortices = VortexConfiguration.from_lists([[(0.5, 0.5)], []])

# ==============================================================================
# 3. SCANS
# ==============================================================================
tables = []
for a in DEFORMATIONS:
    params = ModelParams(m=2, a=a, lam=1.0)
    lam_star = torus_threshold(params, vortices.counts, grid.area)
    print(f"a = {a:g}: lambda* = {lam_star:.12g}")
    table = threshold_scan(vortices, params, grid, FACTORS * lam_star)
    table.insert(0, "a", a)
    table.insert(1, "lambda_over_threshold", FACTORS)

    verdicts = table["verdict"].to_numpy()
    flips = int(np.count_nonzero(verdicts[1:] != verdicts[:-1]))
    first = table.loc[table["verdict"], "lambda_over_threshold"].min()
    if flips == 1 and first > 1.0:
        print(f"✅ Verdict flips once, first feasible value at {first:.3g} lambda*.")
    else:
        print(f"⚠️ Unexpected verdict pattern: {verdicts.tolist()}")
    tables.append(table)

# ==============================================================================
# 4. RESULTS
# ==============================================================================
results = pd.concat(tables, ignore_index=True)
output_path = os.path.join(OUTPUT_DIR, "2_existence_threshold.csv")
results.to_csv(output_path, index=False, float_format="%.17g")
print(f"✅ Results written to {output_path}")
