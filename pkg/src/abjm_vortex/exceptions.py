"""Error types raised by the solver suite."""


class VortexSolverError(Exception):
    """Base class for every error the package raises."""


class InvalidDimensionError(VortexSolverError):
    """Matrix dimension m (= N - 1) is below 2 or shapes disagree."""


class NotPositiveDefiniteError(VortexSolverError):
    """A Cholesky pivot came out non-positive."""


class ConfigError(VortexSolverError):
    """A run configuration violates one of its invariants."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DivergedIterateError(VortexSolverError):
    """An exponent in the functional exceeded the overflow guard."""


class NonConvergenceError(VortexSolverError):
    """The minimizer hit its iteration cap."""

    def __init__(self, message, residual_history=None, mean_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
        self.mean_history = list(mean_history or [])


class NonexistenceError(VortexSolverError):
    """The torus existence conditions fail, so no solution exists."""

    def __init__(self, message, certificate):
        super().__init__(message)
        self.certificate = certificate


class DivergentFluxError(VortexSolverError):
    """Flux was requested for a planar state, where it diverges for a > 0."""


class UnsupportedParameterError(VortexSolverError):
    """A closed form was requested outside its range of validity."""


class OutputError(VortexSolverError):
    """Writing or reading an output file failed."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class FitDegenerateWarning(UserWarning):
    """The decay fit had too little signal above round-off."""
