"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_X_y, check_array

from .exceptions import ValidationError


def check_design(X, y=None):
    """Validate a coverage design matrix (and travel times, when given)."""
    if y is None:
        X = check_array(X, dtype=np.float64, ensure_2d=True)
    else:
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValidationError("coverage fractions must lie in [0, 1]")
    if np.any(~X.any(axis=1)):
        raise ValidationError("every observation must cover at least one link")
    if y is None:
        return X
    if np.any(y <= 0):
        raise ValidationError("observed travel times must be positive")
    return X, y


def check_link_vector(v, n_links, name="theta"):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n_links,):
        raise ValidationError(f"{name} has shape {v.shape}, expected ({n_links},)")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite values")
    return v


def check_penalty(value, name):
    value = float(value)
    if not (np.isfinite(value) and value >= 0):
        raise ValidationError(f"{name} must be a finite non-negative number, got {value}")
    return value
