"""Exception hierarchy shared by the pipeline stages.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class ShmError(Exception):
    """Base class for all package errors."""


class DataError(ShmError, ValueError):
    """Malformed, missing or incompatible input data."""


class ConfigError(ShmError, ValueError):
    """Invalid run configuration."""


class NumericalError(ShmError, ArithmeticError):
    """A numerical routine failed (non-finite values, no convergence)."""


class TrainingError(NumericalError):
    pass


class InfeasibleError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
