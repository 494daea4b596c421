"""Dense float64 tensor helpers.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers here
add the shape and finiteness checks every public operation relies on.
"""
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import NonFiniteError, ShapeError

Tensor = NDArray[np.float64]

DTYPE = np.float64


def as_tensor(values, shape: Optional[Sequence[int]] = None) -> Tensor:
    """Convert ``values`` to a contiguous float64 array, optionally reshaping it."""
    arr = np.ascontiguousarray(values, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"dimensions must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def check_finite(name: str, arr: np.ndarray) -> None:
    """Raise NonFiniteError when ``arr`` holds a NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{name}: {bad} non-finite value(s)")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a`` [m x k] and ``b`` [k x n]."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = a @ b
    check_finite("matmul", out)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


def softmax_backward(probs: Tensor, dprobs: Tensor) -> Tensor:
    """Gradient w.r.t. logits given the gradient w.r.t. softmax outputs."""
    inner = np.sum(probs * dprobs, axis=-1, keepdims=True)
    return probs * (dprobs - inner)
