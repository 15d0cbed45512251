"""Input validation helpers shared by the estimators and functional API."""

import math
import numbers

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


class LaminarUnderflowError(FloatingPointError):
    """An orbit entered the neutral region below the representable safety floor."""


class InsufficientSignalError(RuntimeError):
    """Too few usable points remain for a regression."""


def check_gamma(gamma, *, long_range=False, strict_long_range=False):
    """Validate the intermittency exponent and return it as a float.

    ``long_range`` restricts to [1/2, 1); ``strict_long_range`` to (1/2, 1).
    """
    if isinstance(gamma, bool) or not isinstance(gamma, numbers.Real):
        raise DomainError(f"gamma must be a real number, got {gamma!r}")
    gamma = float(gamma)
    if not math.isfinite(gamma) or not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    if strict_long_range and not 0.5 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (1/2, 1), got {gamma}")
    if long_range and not 0.5 <= gamma < 1.0:
        raise DomainError(f"gamma must lie in [1/2, 1), got {gamma}")
    return gamma


def check_unit_interval(x, name="x"):
    """Return ``x`` as a float array after checking it is finite and in [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def check_count(n, name="n", minimum=1):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {n!r}")
    if n < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {n}")
    return int(n)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise DomainError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed < 2**64:
        raise DomainError("seed must be an unsigned 64-bit integer")
    return int(seed)


def check_orbits(X):
    """Coerce orbit input to a C-contiguous 2-D array (replicates x length)."""
    from sklearn.utils.validation import check_array

    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    return np.ascontiguousarray(check_unit_interval(X, "orbit values"))
