"""Dense float64 tensor primitives used by every numeric module.

Arrays are plain numpy ndarrays; `as_tensor` is the single entry point that
coerces caller input to float64, C-contiguous storage and rejects NaN/Inf.
All public operations in this module are pure functions: they never mutate
their arguments, so values can be shared freely across threads.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = [
    "as_tensor",
    "matmul",
    "softmax",
    "layer_normalize",
    "finite_difference_gradient",
]


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Coerce `data` to a float64 C-order ndarray with finite entries.

    Args:
        data: anything numpy can convert to a float array.
        shape: when given, the exact shape the result must have.

    Raises:
        ParameterError: a value is NaN or infinite, or conversion fails.
        DimensionError: the shape does not match `shape`.
    """
    try:
        arr = np.ascontiguousarray(data, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"cannot convert input to a float tensor: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise ParameterError("tensor entries must be finite (no NaN or Inf)")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Standard matrix product of two rank-2 tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def softmax(x, axis: int = -1) -> np.ndarray:
    """Softmax along one axis, stabilized by max subtraction.

    The subtraction leaves the result mathematically unchanged and keeps
    exp() in range for any finite input, so rows that differ only by an
    additive constant produce identical probabilities.
    """
    x = as_tensor(x)
    if x.size == 0:
        raise DimensionError("softmax over an empty tensor is undefined")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_normalize(x, eps: float = 1e-6, gain: float = 1.0, bias: float = 0.0) -> np.ndarray:
    """Normalize a whole tensor to zero mean / unit variance, then affine.

    Statistics are taken over every entry of `x` (not per row or per slice):
    out = gain * (x - mean) / sqrt(var + eps) + bias, with the population
    variance. A constant input maps to `bias` everywhere.
    """
    x = as_tensor(x)
    if x.size == 0:
        raise DimensionError("cannot normalize an empty tensor")
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if not gain > 0:
        raise ParameterError(f"gain must be positive, got {gain}")
    mean = float(np.mean(x))
    var = float(np.var(x))
    return gain * (x - mean) / np.sqrt(var + eps) + bias


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Numerical gradient of a scalar function by central differences.

    Evaluates (f(x + h e_i) - f(x - h e_i)) / (2 h) for every coordinate.
    Slow (two evaluations per entry) but implementation-agnostic, which is
    what makes it a trustworthy oracle for analytic backward passes.
    """
    x = as_tensor(x)
    if not h > 0:
        raise ParameterError(f"step size must be positive, got {h}")
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        bumped = x.copy()
        bumped[idx] = x[idx] + h
        hi = float(f(bumped))
        bumped[idx] = x[idx] - h
        lo = float(f(bumped))
        grad[idx] = (hi - lo) / (2.0 * h)
    return grad
