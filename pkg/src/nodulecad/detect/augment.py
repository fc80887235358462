"""Training-time slice augmentations: right-angle rotations, flips, affine warps."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..volume import GraySlice, round_half_up


class AugmentOp(enum.Enum):
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    FLIP_H = "flip_h"
    FLIP_V = "flip_v"


@dataclass(frozen=True)
class Affine:
    """2x3 matrix mapping input ``(row, col, 1)`` to output ``(row, col)``."""

    matrix: Tuple[Tuple[float, float, float], Tuple[float, float, float]]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        if abs(np.linalg.det(m[:, :2])) < 1e-12:
            raise ValueError("affine matrix is not invertible")
        object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in m))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=np.float64)


def random_affine(
    rng: np.random.Generator,
    shape: Tuple[int, int],
    max_rot_deg: float = 10.0,
    max_shear: float = 0.1,
    scale_range: Tuple[float, float] = (0.9, 1.1),
) -> Affine:
    """Rotation, shear and isotropic scale about the slice centre."""
    theta = math.radians(rng.uniform(-max_rot_deg, max_rot_deg))
    shear = rng.uniform(-max_shear, max_shear)
    scale = rng.uniform(*scale_range)
    c, s = math.cos(theta), math.sin(theta)
    a = scale * np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    center = (np.asarray(shape, dtype=np.float64) - 1) / 2
    t = center - a @ center
    return Affine(tuple(map(tuple, np.hstack([a, t[:, None]]))))


def _bilinear_zero(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinear samples with zero outside the image."""
    h, w = img.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = img
    r = rows + 1.0
    c = cols + 1.0
    outside = (r < 0) | (r > h + 1) | (c < 0) | (c > w + 1)
    r = np.clip(r, 0, h + 1)
    c = np.clip(c, 0, w + 1)
    r0 = np.minimum(np.floor(r).astype(np.intp), h)
    c0 = np.minimum(np.floor(c).astype(np.intp), w)
    fr = r - r0
    fc = c - c0
    v = (
        padded[r0, c0] * (1 - fr) * (1 - fc)
        + padded[r0 + 1, c0] * fr * (1 - fc)
        + padded[r0, c0 + 1] * (1 - fr) * fc
        + padded[r0 + 1, c0 + 1] * fr * fc
    )
    v[outside] = 0.0
    return v


def warp_affine(pixels: np.ndarray, op: Affine) -> np.ndarray:
    m = op.array
    inv = np.linalg.inv(m[:, :2])
    h, w = pixels.shape
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float64)
    out_pts = np.stack([rr.ravel() - m[0, 2], cc.ravel() - m[1, 2]])
    src = inv @ out_pts
    vals = _bilinear_zero(pixels.astype(np.float64), src[0], src[1]).reshape(h, w)
    if np.issubdtype(pixels.dtype, np.integer):
        info = np.iinfo(pixels.dtype)
        return np.clip(round_half_up(vals), info.min, info.max).astype(pixels.dtype)
    return vals.astype(pixels.dtype)


def augment_pixels(pixels: np.ndarray, op: Union[AugmentOp, Affine]) -> np.ndarray:
    if isinstance(op, Affine):
        return warp_affine(pixels, op)
    if op in (AugmentOp.ROT90, AugmentOp.ROT180, AugmentOp.ROT270):
        if pixels.shape[0] != pixels.shape[1]:
            raise ValueError(f"rotation requires a square slice, got {pixels.shape}")
        k = {AugmentOp.ROT90: 1, AugmentOp.ROT180: 2, AugmentOp.ROT270: 3}[op]
        return np.ascontiguousarray(np.rot90(pixels, k))
    if op is AugmentOp.FLIP_H:
        return np.ascontiguousarray(pixels[:, ::-1])
    if op is AugmentOp.FLIP_V:
        return np.ascontiguousarray(pixels[::-1, :])
    raise ValueError(f"unknown augmentation {op!r}")


def augment(s: GraySlice, op: Union[AugmentOp, Affine]) -> GraySlice:
    return s.with_pixels(augment_pixels(s.pixels, op))
