"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["as_matrix", "as_vector", "check_interval", "check_in_open_unit"]


def as_matrix(X, name="X") -> np.ndarray:
    """Coerce to a 2-D float64 array with finite entries."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def as_vector(v, dim=None, name="v") -> np.ndarray:
    """Coerce to a 1-D float64 array, optionally checking its length."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 2 and 1 in a.shape:
        a = a.ravel()
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={a.ndim}")
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"{name} has length {a.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_interval(interval, name="interval", allow_infinite=True):
    """Validate a closed interval given as (lo, hi); returns a float tuple."""
    try:
        lo, hi = interval
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a (lo, hi) pair") from None
    lo, hi = float(lo), float(hi)
    if math.isnan(lo) or math.isnan(hi):
        raise ValueError(f"{name} endpoints must not be NaN")
    if not allow_infinite and not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"{name} must be finite")
    if lo > hi:
        raise ValueError(f"{name} has lo={lo} > hi={hi}")
    return lo, hi


def check_in_open_unit(x, name):
    x = float(x)
    if not 0.0 < x < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {x}")
    return x
