"""Synthetic low-rank test cubes with piecewise-smooth abundance maps."""

from __future__ import annotations

import numpy as np

from .core import HsiCube


def _abundances(m: int, n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.mgrid[0:m, 0:n]
    rows = rows / max(m - 1, 1)
    cols = cols / max(n - 1, 1)
    maps = []
    for k in range(rank):
        # a few flat blobs on a soft ramp
        field = 0.3 * (np.cos(2 * np.pi * (rows * rng.uniform(0.3, 1.0) + k / rank)) + 1) / 2
        for _ in range(3):
            cy, cx = rng.uniform(0.15, 0.85, size=2)
            rad = rng.uniform(0.1, 0.3)
            field = np.where((rows - cy) ** 2 + (cols - cx) ** 2 < rad**2, rng.uniform(0.4, 1.0), field)
        if k % 2 == 1:
            field = np.where(cols > rng.uniform(0.3, 0.7), field, 0.2 * field)
        maps.append(field)
    a = np.stack(maps, axis=-1)
    return a / a.sum(axis=-1, keepdims=True)


def _endmembers(b: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    wl = np.linspace(0.0, 1.0, b)
    ends = []
    for _ in range(rank):
        c = rng.uniform(0.0, 1.0)
        w = rng.uniform(0.2, 0.6)
        ends.append(0.15 + 0.8 * np.exp(-((wl - c) ** 2) / (2 * w * w)))
    return np.stack(ends, axis=-1)


def low_rank_cube(m: int = 64, n: int = 64, b: int = 10, rank: int = 3, seed: int = 0) -> HsiCube:
    """Exactly rank-``rank`` cube (in the mode-3 unfolding) with values in [0, 1]."""
    rng = np.random.default_rng(seed)
    a = _abundances(m, n, rank, rng)
    e = _endmembers(b, rank, rng)
    x = a.reshape(m * n, rank) @ e.T
    x = (x - x.min()) / (x.max() - x.min())
    return HsiCube(x.reshape(m, n, b))
