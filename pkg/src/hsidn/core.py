"""Cube container, mode-3 fold/unfold and element-wise helpers.

Pixel order of the mode-3 unfolding is row-major: pixel ``(m, n)`` of an
``M x N x B`` cube lands in row ``m * N + n`` and band ``b`` in column ``b``.
This is exactly a C-order reshape of the ``(M, N, B)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue

DEFAULT_FLOOR = 1e-3


def _frozen_copy(data, ndim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True, order="C")
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{what} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0 or min(arr.shape) < 1:
        raise DimensionMismatch(f"{what} dimensions must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class HsiCube:
    """An ``M x N x B`` real cube (rows, columns, bands), float64, read-only."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_copy(self.data, 3, "HsiCube"))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def spatial_dims(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @classmethod
    def zeros(cls, m: int, n: int, b: int) -> "HsiCube":
        return cls(np.zeros((m, n, b)))

    def __repr__(self):
        return f"HsiCube(shape={self.shape})"


@dataclass(frozen=True, eq=False)
class UnfoldedMatrix:
    """``MN x B`` mode-3 unfolding that remembers ``(M, N)`` for refolding."""

    data: np.ndarray
    spatial_dims: tuple[int, int]

    def __post_init__(self):
        arr = _frozen_copy(self.data, 2, "UnfoldedMatrix")
        m, n = (int(d) for d in self.spatial_dims)
        if m < 1 or n < 1:
            raise DimensionMismatch(f"spatial dims must be positive, got {(m, n)}")
        if arr.shape[0] != m * n:
            raise DimensionMismatch(
                f"row count {arr.shape[0]} does not match M*N = {m}*{n} = {m * n}"
            )
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spatial_dims", (m, n))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        return f"UnfoldedMatrix(shape={self.shape}, spatial_dims={self.spatial_dims})"


def unfold3(cube: HsiCube) -> UnfoldedMatrix:
    m, n, b = cube.shape
    return UnfoldedMatrix(cube.data.reshape(m * n, b), (m, n))


def fold3(mat, spatial_dims: tuple[int, int] | None = None) -> HsiCube:
    """Inverse of :func:`unfold3`.

    ``mat`` is an :class:`UnfoldedMatrix`, or a plain ``MN x B`` array together
    with ``spatial_dims``.
    """
    if isinstance(mat, UnfoldedMatrix):
        data, (m, n) = mat.data, mat.spatial_dims
    else:
        if spatial_dims is None:
            raise DimensionMismatch("spatial_dims required when folding a bare array")
        data = np.asarray(mat, dtype=np.float64)
        m, n = spatial_dims
        if data.ndim != 2 or data.shape[0] != m * n:
            raise DimensionMismatch(
                f"cannot fold shape {data.shape} with spatial dims {(m, n)}"
            )
    return HsiCube(data.reshape(m, n, data.shape[1]))


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return a * b


def safe_divide(num, den, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Element-wise ``num / max(den, floor)``."""
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    _same_shape(num, den)
    return num / np.maximum(den, floor)


def all_ones(shape) -> np.ndarray:
    """The all-ones matrix/tensor used as the reference weight."""
    return np.ones(shape, dtype=np.float64)
