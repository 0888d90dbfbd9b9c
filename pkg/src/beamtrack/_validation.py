"""Input checks for the estimator API (sklearn's ``check_array`` refuses complex data)."""

import numbers

import numpy as np

from beamtrack.exceptions import DomainError


def check_complex_array(X, *, ndim=2, name="X", min_rows=1):
    X = np.asarray(X)
    if X.dtype == object or not np.issubdtype(X.dtype, np.number):
        raise DomainError(f"{name} must be numeric, got dtype {X.dtype}")
    X = X.astype(complex, copy=False)
    if ndim == 2 and X.ndim == 1:
        X = X[None, :]
    if X.ndim != ndim:
        raise DomainError(f"{name} must be {ndim}-dimensional, got shape {X.shape}")
    if X.shape[0] < min_rows:
        raise DomainError(f"{name} needs at least {min_rows} row(s)")
    if not np.all(np.isfinite(X)):
        raise DomainError(f"{name} contains NaN or infinity")
    return X


def check_angles(theta, name="theta"):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    if np.any(~np.isfinite(theta)) or np.any(np.abs(theta) > 1.0):
        raise DomainError(f"{name} must lie in [-1, 1]")
    return theta


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
