"""Periodic difference operators, their FFT diagonalisation, and the
closed-form kernels used by the ADMM block updates.

Array-level helpers (``forward_diff`` and friends) work on plain ``MN x k``
arrays plus the spatial dims; the :class:`UnfoldedMatrix` wrappers
(``grad``, ``grad_adjoint``, ``fft_diag_solve``) are the public surface.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import UnfoldedMatrix
from .errors import (
    DimensionMismatch,
    NegativeThreshold,
    NonpositiveRho,
    RankDeficientWarning,
    RankOutOfRange,
)


def _check_axis(axis: int) -> int:
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 (vertical) or 2 (horizontal), got {axis}")
    return axis - 1


def forward_diff(x: np.ndarray, dims: tuple[int, int], axis: int) -> np.ndarray:
    """Periodic forward difference of every column of ``x`` seen as an M x N field."""
    m, n = dims
    ax = _check_axis(axis)
    f = x.reshape(m, n, -1)
    return (np.roll(f, -1, axis=ax) - f).reshape(x.shape)


def forward_diff_adjoint(v: np.ndarray, dims: tuple[int, int], axis: int) -> np.ndarray:
    m, n = dims
    ax = _check_axis(axis)
    f = v.reshape(m, n, -1)
    return (np.roll(f, 1, axis=ax) - f).reshape(v.shape)


def grad(u: UnfoldedMatrix, axis: int) -> UnfoldedMatrix:
    """Per-band periodic forward difference: axis 1 is down the rows, axis 2 across columns."""
    return UnfoldedMatrix(forward_diff(u.data, u.spatial_dims, axis), u.spatial_dims)


def grad_adjoint(v: UnfoldedMatrix, axis: int) -> UnfoldedMatrix:
    return UnfoldedMatrix(forward_diff_adjoint(v.data, v.spatial_dims, axis), v.spatial_dims)


@dataclass(frozen=True, eq=False)
class DiffFilters:
    """Difference kernels for an M x N grid and their 2-D frequency responses.

    ``f1`` realises the vertical difference and ``f2`` the horizontal one as
    circular convolutions, so ``ifft2(spectrum * fft2(u))`` equals
    ``forward_diff(u)``. Spectra are stored in ``rfft2`` layout.
    """

    m: int
    n: int
    f1: np.ndarray
    f2: np.ndarray
    spectrum1: np.ndarray
    spectrum2: np.ndarray

    @property
    def power1(self) -> np.ndarray:
        return np.abs(self.spectrum1) ** 2

    @property
    def power2(self) -> np.ndarray:
        return np.abs(self.spectrum2) ** 2


@lru_cache(maxsize=32)
def diff_filters(m: int, n: int) -> DiffFilters:
    f1 = np.zeros((m, n))
    f2 = np.zeros((m, n))
    f1[0, 0] -= 1.0
    f1[-1 % m, 0] += 1.0
    f2[0, 0] -= 1.0
    f2[0, -1 % n] += 1.0
    s1 = np.fft.rfft2(f1)
    s2 = np.fft.rfft2(f2)
    for a in (f1, f2, s1, s2):
        a.flags.writeable = False
    return DiffFilters(m, n, f1, f2, s1, s2)


def fft_diag_solve_array(
    rhs: np.ndarray,
    dims: tuple[int, int],
    rho: float,
    weights: tuple[float, float] = (1.0, 1.0),
) -> np.ndarray:
    """Solve ``(rho I + rho sum_i w_i D_i^T D_i) U = rhs`` column by column."""
    if not rho > 0:
        raise NonpositiveRho(f"rho must be positive, got {rho}")
    m, n = dims
    filt = diff_filters(m, n)
    denom = rho * (1.0 + weights[0] * filt.power1 + weights[1] * filt.power2)
    fields = rhs.reshape(m, n, -1)
    spec = np.fft.rfft2(fields, axes=(0, 1))
    out = np.fft.irfft2(spec / denom[:, :, None], s=(m, n), axes=(0, 1))
    return out.reshape(rhs.shape)


def fft_diag_solve(
    rhs: UnfoldedMatrix,
    rho: float,
    filters: DiffFilters | None = None,
    weights: tuple[float, float] = (1.0, 1.0),
) -> UnfoldedMatrix:
    dims = rhs.spatial_dims
    if filters is not None and (filters.m, filters.n) != dims:
        raise DimensionMismatch(
            f"filters built for {(filters.m, filters.n)}, rhs has spatial dims {dims}"
        )
    return UnfoldedMatrix(fft_diag_solve_array(rhs.data, dims, rho, weights), dims)


def soft_threshold(x, t: float) -> np.ndarray:
    """Proximal map of ``t * ||.||_1``."""
    if t < 0:
        raise NegativeThreshold(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def shrink_l21_columns(omega, t: float) -> np.ndarray:
    """Proximal map of ``t * sum_j ||omega[:, j]||_2``: radial shrink or zero per column."""
    if t < 0:
        raise NegativeThreshold(f"threshold must be nonnegative, got {t}")
    omega = np.asarray(omega, dtype=np.float64)
    norms = np.linalg.norm(omega, axis=0)
    scale = np.zeros_like(norms)
    keep = norms > t
    scale[keep] = 1.0 - t / norms[keep]
    return omega * scale


def _fix_signs(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each right singular vector made positive
    idx = np.argmax(np.abs(right), axis=0)
    signs = np.sign(right[idx, np.arange(right.shape[1])])
    signs[signs == 0] = 1.0
    return left * signs, right * signs


def procrustes_orthogonal(a, rank_tol: float = 1e-12) -> np.ndarray:
    """Maximise ``<a, V>`` over ``B x R`` matrices with orthonormal columns.

    Returns ``P @ Q.T`` from the thin SVD ``a = P diag(s) Q.T``. A
    :class:`RankDeficientWarning` is emitted when ``a`` is numerically rank
    deficient; the maximiser is then not unique but the SVD one is returned.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise DimensionMismatch(f"procrustes needs a tall B x R matrix, got {a.shape}")
    p, s, qt = np.linalg.svd(a, full_matrices=False)
    if s.size and s[-1] <= rank_tol * max(s[0], np.finfo(float).tiny):
        warnings.warn("procrustes input is rank deficient", RankDeficientWarning, stacklevel=2)
    return p @ qt


def truncated_svd(y, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rank-``r`` factors ``(U, V, sigma)`` with singular values folded into ``U``.

    ``U @ V.T`` is the best rank-``r`` Frobenius approximation of ``y`` and
    ``V`` has orthonormal columns.
    """
    data = y.data if isinstance(y, UnfoldedMatrix) else np.asarray(y, dtype=np.float64)
    if not 1 <= r <= min(data.shape):
        raise RankOutOfRange(f"rank {r} outside [1, {min(data.shape)}]")
    left, sigma, vt = np.linalg.svd(data, full_matrices=False)
    left, right = _fix_signs(left[:, :r], vt[:r].T)
    return left * sigma[:r], right, sigma[:r].copy()
