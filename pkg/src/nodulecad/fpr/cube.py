"""Fixed-size candidate cubes for the false-positive reduction stage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..detect.boxes import Candidate
from ..volume import CtVolume, _interp_axis, round_half_up

CUBE_SIZE = 32
MARGINS = (0, 4, 8)


@dataclass(frozen=True)
class Cube32:
    data: np.ndarray
    candidate_id: str = ""
    margin_vox: int = 0

    def __post_init__(self):
        if self.data.shape != (CUBE_SIZE,) * 3:
            raise ValueError(f"cube must be {CUBE_SIZE}^3, got {self.data.shape}")


def cube_box(v: CtVolume, c: Candidate, margin_vox: int = 0):
    """Per-axis ``(start, size)`` of the crop box in voxel indices, x/y/z order.

    The box side is ``2 * (radius_vox + margin_vox)`` rounded half up (at
    least 2) and is centred on the voxel nearest the candidate centre,
    starting ``size // 2`` voxels before it.
    """
    if margin_vox < 0:
        raise ValueError("margin_vox must be >= 0")
    idx = (np.asarray(c.center) - np.asarray(v.origin)) / np.asarray(v.spacing)
    center = np.floor(idx + 0.5).astype(int)
    out = []
    for k in range(3):
        half = c.radius_mm / v.spacing[k] + margin_vox
        size = max(2, int(round_half_up(2.0 * half)))
        out.append((int(center[k]) - size // 2, size))
    return tuple(out)


def _crop(a: np.ndarray, box) -> np.ndarray:
    """Crop ``a`` (z, y, x) over ``box`` (x, y, z order), zero outside ``a``."""
    idx = []
    valid = []
    for arr_axis, (start, size) in zip((2, 1, 0), box):
        r = np.arange(start, start + size)
        ok = (r >= 0) & (r < a.shape[arr_axis])
        idx.append(np.clip(r, 0, a.shape[arr_axis] - 1))
        valid.append(ok)
    ix, iy, iz = idx
    out = a[np.ix_(iz, iy, ix)].astype(np.float64)
    vx, vy, vz = valid
    out *= vz[:, None, None] & vy[None, :, None] & vx[None, None, :]
    return out


def _rescale(a: np.ndarray, n: int = CUBE_SIZE) -> np.ndarray:
    """Trilinear resize with pixel-centre alignment: output ``j`` samples ``(j + 0.5) * S / n - 0.5``."""
    for axis in range(3):
        size = a.shape[axis]
        if size == n:
            continue
        pos = (np.arange(n) + 0.5) * (size / n) - 0.5
        a = _interp_axis(a, axis, pos)
    return a


def extract_cube(
    v: CtVolume,
    c: Candidate,
    margin_vox: int = 4,
    use_mask: bool = False,
    mask: Optional[np.ndarray] = None,
) -> Cube32:
    """Crop around ``c``, zero-pad outside the volume, resize to 32^3, divide by 255.

    With ``use_mask`` the voxels outside ``mask`` (same shape as the voxel
    array) are zeroed before cropping.
    """
    a = v.voxels
    if use_mask:
        if mask is None or mask.shape != a.shape:
            raise ValueError("use_mask requires a mask with the volume's shape")
        a = np.where(mask > 0, a, 0)
    crop = _crop(a, cube_box(v, c, margin_vox))
    data = np.clip(_rescale(crop) / 255.0, 0.0, 1.0)
    cid = f"{c.scan_id}@{c.center[0]:.3f},{c.center[1]:.3f},{c.center[2]:.3f}"
    return Cube32(data, cid, margin_vox)
