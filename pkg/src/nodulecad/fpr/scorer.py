"""Deterministic cube scorer used where no trained classifier is available."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import ndimage

from .cube import CUBE_SIZE, Cube32


@lru_cache(maxsize=4)
def _grid(n: int):
    c = (n - 1) / 2.0
    ax = np.arange(n, dtype=np.float64) - c
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    inside = (x * x + y * y + z * z) <= (n / 2.0) ** 2
    return z, y, x, inside


def _logistic(s: float) -> float:
    if s >= 0:
        return 1.0 / (1.0 + np.exp(-s))
    e = np.exp(s)
    return e / (1.0 + e)


# structures spanning fewer voxels than a ball of this radius (in cube
# voxels) count proportionally less; keeps noise speckle near 0.5
_MIN_BLOB_RADIUS = 4.0
_SEED_RADIUS = 3.0


def central_blob(data: np.ndarray) -> np.ndarray:
    """Boolean mask of the bright component at the cube centre.

    The level is halfway between the cube median and the brightest voxel
    within ``_SEED_RADIUS`` of the centre; the component (6-connected) grows
    from that brightest voxel.
    """
    z, y, x, _ = _grid(data.shape[0])
    r2 = x * x + y * y + z * z
    med = float(np.median(data))
    seed_zone = r2 <= _SEED_RADIUS**2
    vals = np.where(seed_zone, data, -np.inf)
    seed = np.unravel_index(int(np.argmax(vals)), data.shape)
    peak = float(data[seed])
    if peak <= med:
        return np.zeros(data.shape, dtype=bool)
    level = med + 0.5 * (peak - med)
    labels, _ = ndimage.label(data >= level)
    return labels == labels[seed]


def cube_statistics(data: np.ndarray):
    """``(confinement, roundness, size)`` of the central blob's above-median mass.

    Confinement is the share of the blob's mass inside the inscribed sphere
    (1 for an isolated centred blob, lower for walls and vessels running
    through the cube). Roundness is the ratio of the smallest to the largest
    eigenvalue of the mass-weighted position covariance (1 for balls, near 0
    for tubes and sheets). Size is the blob's voxel count relative to a ball
    of radius 4, capped at 1.
    """
    n = data.shape[0]
    z, y, x, inside = _grid(n)
    blob = central_blob(data)
    m = np.where(blob, np.maximum(data - np.median(data), 0.0), 0.0)
    total = m.sum()
    if total <= 0:
        return 0.0, 0.0, 0.0
    conf = float(m[inside].sum() / total)
    pos = np.stack([z[blob], y[blob], x[blob]])
    w = m[blob] / total
    mu = pos @ w
    d = pos - mu[:, None]
    cov = (d * w) @ d.T
    ev = np.linalg.eigvalsh(cov)
    round_ = float(ev[0] / ev[-1]) if ev[-1] > 0 else 1.0
    size = min(1.0, blob.sum() / (4.0 / 3.0 * np.pi * _MIN_BLOB_RADIUS**3))
    return conf, round_, float(size)


def heuristic_score(cube, gain: float = 4.0) -> float:
    """``logistic(gain * confinement * roundness * size)``; an empty cube scores 0.5."""
    data = cube.data if isinstance(cube, Cube32) else np.asarray(cube, dtype=np.float64)
    if data.shape != (CUBE_SIZE,) * 3:
        raise ValueError(f"cube must be {CUBE_SIZE}^3, got {data.shape}")
    conf, round_, size = cube_statistics(data)
    return float(_logistic(gain * conf * round_ * size))


def bce_loss(p, y, eps: float = 1e-7):
    """Binary cross-entropy and its derivative with respect to ``p``.

    ``p`` is clamped to ``[eps, 1 - eps]``; where clamping is active the
    returned gradient is 0.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, eps, 1.0 - eps)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    grad = -(y / pc) + (1.0 - y) / (1.0 - pc)
    grad = np.where((p < eps) | (p > 1.0 - eps), 0.0, grad)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad
