"""Dense float64 vector/matrix kernels.

Every solver step is written as maps, reductions and matrix-vector products
over contiguous ``float64`` arrays. Index sets are boolean masks of the
ambient dimension, never index lists, so each kernel is a single
componentwise pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array operands do not conform."""


def as_vector(x, name: str = "x") -> np.ndarray:
    """Return ``x`` as a contiguous 1-D float64 array."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim == 2 and 1 in v.shape:
        v = v.reshape(-1)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {v.shape}")
    return v


def as_matrix(a, name: str = "a") -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {m.shape}")
    return m


def _check_same_length(**arrays: np.ndarray) -> int:
    lengths = {k: len(v) for k, v in arrays.items()}
    if len(set(lengths.values())) > 1:
        desc = ", ".join(f"{k}={n}" for k, n in lengths.items())
        raise DimensionError(f"length mismatch: {desc}")
    return next(iter(lengths.values()))


@dataclass(frozen=True)
class BoxBounds:
    """Per-coordinate bounds ``lower <= x <= upper``; infinities are allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        _check_same_length(lower=lower, upper=upper)
        if np.isnan(lower).any() or np.isnan(upper).any():
            raise ValueError("bounds must not contain NaN")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ValueError("lower bounds may not be +inf and upper bounds may not be -inf")
        if np.any(lower > upper):
            i = int(np.argmax(lower > upper))
            raise ValueError(f"lower[{i}]={lower[i]} exceeds upper[{i}]={upper[i]}")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, n: int) -> BoxBounds:
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def uniform(cls, n: int, lower: float = -np.inf, upper: float = np.inf) -> BoxBounds:
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    def __len__(self) -> int:
        return len(self.lower)

    def contains(self, x) -> bool:
        x = as_vector(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def clip_to_box(x, bounds: BoxBounds) -> np.ndarray:
    """Componentwise ``min(max(x, lower), upper)``."""
    x = as_vector(x)
    _check_same_length(x=x, bounds=bounds.lower)
    return np.minimum(np.maximum(x, bounds.lower), bounds.upper)


def masked_dot(u, v, mask) -> float:
    """Dot product restricted to the coordinates where ``mask`` is true.

    Coordinates outside the mask are zeroed rather than gathered, so a full
    mask reproduces ``np.dot(u, v)`` bit for bit.
    """
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    mask = np.asarray(mask, dtype=bool)
    _check_same_length(u=u, v=v, mask=mask)
    return float(np.dot(np.where(mask, u, 0.0), v))


def masked(u, mask) -> np.ndarray:
    """Copy of ``u`` with coordinates outside ``mask`` set to zero."""
    u = as_vector(u, "u")
    mask = np.asarray(mask, dtype=bool)
    _check_same_length(u=u, mask=mask)
    return np.where(mask, u, 0.0)


def matvec(a, x, transpose: bool = False) -> np.ndarray:
    """Dense product ``a @ x`` (or ``a.T @ x``) in double precision."""
    a = as_matrix(a)
    x = as_vector(x)
    rows, cols = a.shape
    expected = rows if transpose else cols
    if len(x) != expected:
        op = "a.T @ x" if transpose else "a @ x"
        raise DimensionError(f"{op}: matrix is {rows}x{cols}, vector has length {len(x)}")
    return a.T @ x if transpose else a @ x


def inf_norm(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(np.abs(v))) if v.size else 0.0
