"""Gaussian kernel density estimation on a fixed reporting grid."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["kde", "kde_grid", "GRID_POINTS"]

GRID_POINTS = 512
_CHUNK = 4096


def kde_grid(samples: np.ndarray, bandwidth: float, n_points: int = GRID_POINTS) -> np.ndarray:
    """Evaluation grid spanning the sample range padded by six bandwidths."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("cannot build a KDE grid from an empty sample")
    if not bandwidth > 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    pad = 6.0 * bandwidth
    return np.linspace(samples.min() - pad, samples.max() + pad, n_points)


def kde(samples: np.ndarray, bandwidth: float, grid: np.ndarray) -> np.ndarray:
    """Gaussian-kernel density estimate of ``samples`` evaluated on ``grid``.

    Plain average of N(g; x_i, bandwidth²) over the sample, computed in
    sample chunks so large runs stay within a few megabytes.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("cannot estimate a density from an empty sample")
    if not bandwidth > 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth)
    total = np.zeros(grid.shape[0])
    for start in range(0, samples.size, _CHUNK):
        chunk = samples[start : start + _CHUNK]
        total += np.exp(-(grid[:, None] - chunk[None, :]) ** 2 * inv2h2).sum(axis=1)
    return total / (samples.size * bandwidth * math.sqrt(2.0 * math.pi))
