"""Dispatch for the hot numeric kernels.

The numba path is used when numba imports cleanly, unless the environment
variable ``WINDSPDE_DISABLE_NUMBA`` is set to a truthy value, in which case
the pure-numpy implementations are used. Both paths are importable directly
(``windspde._numpy_kernels`` / ``windspde._numba_kernels``) for testing and
benchmarking.
"""
import os

from . import _numpy_kernels

_FLAG = os.environ.get("WINDSPDE_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        from . import _numba_kernels as _impl
    except ImportError:  # numba missing or broken
        USE_NUMBA = False
        _impl = _numpy_kernels
else:
    _impl = _numpy_kernels

BACKEND = "numba" if USE_NUMBA else "numpy"

weibull_terms = _impl.weibull_terms
locate_points = _impl.locate_points
band_selected_inverse = _impl.band_selected_inverse

__all__ = ["BACKEND", "USE_NUMBA", "weibull_terms", "locate_points",
           "band_selected_inverse"]
