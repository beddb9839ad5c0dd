"""Hierarchical Bayesian wind-speed modelling with SPDE Matérn fields."""
from .errors import ConfigError, ConvergenceError, DataError, NumericalError, WindSpdeError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "ConvergenceError", "DataError", "NumericalError",
           "WindSpdeError", "__version__"]
