"""Input validation helpers shared across the public API surface."""

import numpy as np

from .exceptions import DimensionMismatchError

__all__ = ["as_vector", "as_matrix", "as_labels", "require_same_shape"]


def as_vector(x, name: str = "x", dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array, optionally of length ``dim``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatchError(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(X, name: str = "X", cols: int | None = None) -> np.ndarray:
    """Coerce ``X`` to a finite 2-D float64 array, optionally with ``cols`` columns."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionMismatchError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_labels(y, name: str = "labels", length: int | None = None) -> np.ndarray:
    """Coerce ``y`` to a 1-D int64 array, optionally of a required length."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError(f"{name} must be integer-valued")
    arr = arr.astype(np.int64)
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatchError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def require_same_shape(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"{name_a} and {name_b} must share a shape, got {a.shape} vs {b.shape}"
        )
