"""Input validation helpers shared by the estimators and free functions."""

import numbers

import numpy as np


def check_points(x, *, allow_single=True):
    """Return ``x`` as a float array of shape (n, 3) plus a flag telling
    whether a single point was passed.

    Raises ``ValueError`` for wrong shapes or non-finite coordinates.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        if not allow_single:
            raise ValueError("expected an array of points with shape (n, 3)")
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3) or (3,), got {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr, single


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_directions(directions):
    """Normalize an array of directions to unit vectors."""
    d, _ = check_points(directions)
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms == 0):
        raise ValueError("directions must be nonzero")
    return d / norms[:, None]


def check_spinor_values(values, n):
    v = np.asarray(values, dtype=complex)
    if v.shape != (n, 2):
        raise ValueError(f"spinor evaluator must return shape ({n}, 2), got {v.shape}")
    return v
