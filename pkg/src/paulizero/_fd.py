"""Centered finite-difference stencils for vector and spinor evaluators.

All evaluators map an (n, 3) array of points to an (n, k) array.
"""

import numpy as np

_UNIT = np.eye(3)


def partial(func, x, axis, h, order=2):
    """Centered difference of ``func`` along a Cartesian axis at points ``x``."""
    e = h * _UNIT[axis]
    if order == 2:
        return (func(x + e) - func(x - e)) / (2 * h)
    if order == 4:
        return (8 * (func(x + e) - func(x - e)) - (func(x + 2 * e) - func(x - 2 * e))) / (12 * h)
    raise ValueError("order must be 2 or 4")


def gradient(func, x, h, order=2):
    """Stack of partial derivatives, shape (n, 3, k)."""
    return np.stack([partial(func, x, k, h, order) for k in range(3)], axis=1)


def divergence(func, x, h, order=2):
    return sum(partial(func, x, k, h, order)[:, k] for k in range(3))


def curl(func, x, h, order=2):
    d = gradient(func, x, h, order)  # d[:, j, k] = d_j F_k
    return np.stack(
        [d[:, 1, 2] - d[:, 2, 1], d[:, 2, 0] - d[:, 0, 2], d[:, 0, 1] - d[:, 1, 0]], axis=1
    )


def directional(func, x, direction, h):
    """Centered difference along per-point directions (n, 3)."""
    return (func(x + h * direction) - func(x - h * direction)) / (2 * h)
