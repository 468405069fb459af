"""Dense float64 helpers every other module builds on.

Everything operates on plain numpy arrays in double precision so that
oracle-style tests can pin tolerances in the 1e-9 range. No sparse formats,
no mixed precision; sizes here are desk scale by design.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "as_matrix",
    "as_vector",
    "matmul",
    "softmax_row",
    "log_softmax_row",
    "finite_diff_grad",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array (copies only when needed)."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ParameterError(f"{name} contains non-finite entries")
    return out


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    out = np.asarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ParameterError(f"{name} contains non-finite entries")
    return out


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit conformance checking."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_row(v, tau: float = 1.0) -> np.ndarray:
    """Temperature softmax along the last axis, stabilized by max subtraction.

    Accepts a vector or any array; rows (last axis) each sum to 1.
    """
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    x = np.asarray(v, dtype=np.float64) / tau
    if not np.all(np.isfinite(x)):
        raise ParameterError("softmax input contains non-finite entries")
    x = x - x.max(axis=-1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


def log_softmax_row(v, tau: float = 1.0) -> np.ndarray:
    """log(softmax_row(v, tau)) without underflowing small probabilities."""
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    x = np.asarray(v, dtype=np.float64) / tau
    if not np.all(np.isfinite(x)):
        raise ParameterError("log-softmax input contains non-finite entries")
    x = x - x.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector.

    Used throughout the test suite as the independent oracle for analytic
    gradients. Raises FloatingPointError if f returns a non-finite value.
    """
    if h <= 0:
        raise ParameterError(f"step h must be positive, got {h}")
    x = as_vector(x, "x")
    grad = np.empty_like(x)
    probe = x.copy()
    for i in range(x.size):
        probe[i] = x[i] + h
        up = float(f(probe))
        probe[i] = x[i] - h
        down = float(f(probe))
        probe[i] = x[i]
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"f returned a non-finite value near coordinate {i}")
        grad[i] = (up - down) / (2.0 * h)
    return grad
