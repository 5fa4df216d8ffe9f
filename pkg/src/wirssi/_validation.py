"""Small input-validation helpers used across the estimators."""

from numbers import Integral, Real

import numpy as np

from .exceptions import ConfigError, DataError


def check_positive(value, name, *, strict=True):
    if not isinstance(value, Real) or not np.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    if strict and value <= 0:
        raise ConfigError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, *, minimum=None, odd=False, even=False):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    if odd and value % 2 != 1:
        raise ConfigError(f"{name} must be odd, got {value}")
    if even and value % 2 != 0:
        raise ConfigError(f"{name} must be even, got {value}")
    return value


def check_fraction(value, name):
    if not isinstance(value, Real) or not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def as_point(p, name="point"):
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite 2D point, got {p!r}")
    return arr


def check_matrix(X, name="X", *, ndim=2, dtype=float, allow_nan=False):
    """Coerce ``X`` to an ndarray of the requested rank."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not allow_nan and arr.size and not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr
