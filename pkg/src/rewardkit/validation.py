"""Input validation helpers for the array-facing API.

Small checks shared by the estimators and metric functions.  They raise
plain ``ValueError`` with messages that name the offending argument, in
the same spirit as scikit-learn's ``check_array``.
"""

from __future__ import annotations

import numpy as np


def check_matrix(X, name: str = "X", *, min_rows: int = 1) -> np.ndarray:
    """Coerce to a 2-D float64 array with finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} row(s), got {X.shape[0]}")
    if X.shape[1] < 1:
        raise ValueError(f"{name} must have at least one column")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def check_vector(x, name: str = "x", *, min_len: int = 1, finite: bool = True) -> np.ndarray:
    """Coerce to a 1-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if x.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} element(s), got {x.size}")
    if finite and not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_same_length(a: np.ndarray, b: np.ndarray, names: str = "inputs") -> None:
    if len(a) != len(b):
        raise ValueError(f"{names} must have equal length, got {len(a)} and {len(b)}")


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
