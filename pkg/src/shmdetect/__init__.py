"""Semi-supervised structural damage detection from vibration records.

A variational autoencoder trained on undamaged acceleration frames supplies
reconstruction features; a nu-one-class SVM flags frames that fall outside the
undamaged feature region; per-sensor flag rates become the probability of damage.
"""

from .errors import ConfigError, ConvergenceError, DataError, NumericalError, ShmError

__version__ = "0.1.0"

__all__ = ["ShmError", "DataError", "ConfigError", "NumericalError", "ConvergenceError",
           "__version__"]
