"""Solver suite for multiple-vortex solutions of the reduced ABJM BPS system."""
from .exceptions import (
    ConfigError,
    DivergedIterateError,
    DivergentFluxError,
    FitDegenerateWarning,
    InvalidDimensionError,
    NonConvergenceError,
    NonexistenceError,
    NotPositiveDefiniteError,
    OutputError,
    UnsupportedParameterError,
    VortexSolverError,
)
from .matrix_core import CouplingMatrix, ModelParams, check_torus_existence, coupling_matrix
from .vortex_sources import VortexConfiguration

__version__ = "0.1.0"
