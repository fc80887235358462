"""CT volume model, intensity windowing, isotropic resampling, MIP slabs and
multi-planar slice geometry.

Voxel arrays are stored as ``(nz, ny, nx)`` numpy arrays so that C order is
x-fastest. Voxel indices are always given as ``(i, j, k) = (x, y, z)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

Vec3 = Tuple[float, float, float]


class PlaneAxis(enum.Enum):
    AXIAL = "axial"
    CORONAL = "coronal"
    SAGITTAL = "sagittal"


# Voxel-index component that is fixed by a slice of each plane.
_FIXED_COMPONENT = {PlaneAxis.AXIAL: 2, PlaneAxis.CORONAL: 1, PlaneAxis.SAGITTAL: 0}


def round_half_up(x):
    """Round to nearest integer, halves away from -inf (``floor(x + 0.5)``)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def _as_vec3(v, name) -> Vec3:
    t = tuple(float(c) for c in v)
    if len(t) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(t)}")
    return t  # type: ignore[return-value]


@dataclass(frozen=True)
class CtVolume:
    """Voxel grid of Hounsfield units with axis-aligned geometry.

    Attributes:
        voxels: array shaped ``(nz, ny, nx)``; int16 on ingest, float after
            interpolation.
        spacing: ``(sx, sy, sz)`` in mm per voxel.
        origin: world position of voxel ``(0, 0, 0)`` in mm.
    """

    voxels: np.ndarray
    spacing: Vec3 = (1.0, 1.0, 1.0)
    origin: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "spacing", _as_vec3(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _as_vec3(self.origin, "origin"))
        if self.voxels.ndim != 3:
            raise ValueError(f"voxels must be 3-D, got shape {self.voxels.shape}")
        if min(self.voxels.shape) < 1:
            raise ValueError("all dims must be >= 1")
        if not all(s > 0 and math.isfinite(s) for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        self._check_dtype()

    def _check_dtype(self):
        if not np.issubdtype(self.voxels.dtype, np.number):
            raise TypeError(f"voxels must be numeric, got {self.voxels.dtype}")

    @property
    def dims(self) -> Tuple[int, int, int]:
        """``(nx, ny, nz)`` voxel counts."""
        nz, ny, nx = self.voxels.shape
        return nx, ny, nz

    def with_voxels(self, voxels: np.ndarray):
        return type(self)(voxels, self.spacing, self.origin)

    def is_isotropic(self, tol: float = 1e-9) -> bool:
        sx, sy, sz = self.spacing
        return abs(sx - sy) <= tol and abs(sx - sz) <= tol


@dataclass(frozen=True)
class GrayVolume(CtVolume):
    """Windowed 8-bit volume; same geometry conventions as :class:`CtVolume`."""

    def _check_dtype(self):
        if self.voxels.dtype != np.uint8:
            raise TypeError(f"GrayVolume requires uint8 voxels, got {self.voxels.dtype}")


@dataclass(frozen=True)
class GraySlice:
    """One 2-D plane (or MIP slab) of a gray volume.

    ``position`` is the voxel coordinate along the slicing axis that the
    slice represents; for MIP slabs it is the (possibly fractional) centre of
    the slab window. ``spacing`` is ``(row_mm, col_mm)``.
    """

    pixels: np.ndarray
    axis: PlaneAxis
    index: int
    position: float
    spacing: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise ValueError(f"slice pixels must be 2-D, got shape {self.pixels.shape}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape  # type: ignore[return-value]

    def with_pixels(self, pixels: np.ndarray) -> "GraySlice":
        return GraySlice(pixels, self.axis, self.index, self.position, self.spacing)


@dataclass(frozen=True)
class WindowSpec:
    lo_hu: float = -1000.0
    hi_hu: float = 400.0
    out_max: int = 255

    def __post_init__(self):
        if not self.lo_hu < self.hi_hu:
            raise ValueError(f"window requires lo_hu < hi_hu, got {self.lo_hu} >= {self.hi_hu}")
        if not 0 < self.out_max <= 255:
            raise ValueError("out_max must be in (0, 255]")


@dataclass(frozen=True)
class MipSpec:
    axis: PlaneAxis = PlaneAxis.AXIAL
    thickness_mm: float = 10.0
    stride_mm: float = 1.0

    def __post_init__(self):
        if not self.stride_mm > 0:
            raise ValueError("stride_mm must be > 0")
        if not self.thickness_mm >= self.stride_mm:
            raise ValueError("thickness_mm must be >= stride_mm")


# --------------------------------------------------------------------------
# Windowing


def apply_window(v: CtVolume, w: WindowSpec = WindowSpec()) -> GrayVolume:
    """Clamp HU to ``[lo, hi]`` and map linearly onto ``[0, out_max]``."""
    h = np.clip(v.voxels.astype(np.float64), w.lo_hu, w.hi_hu)
    scaled = w.out_max * (h - w.lo_hu) / (w.hi_hu - w.lo_hu)
    out = round_half_up(scaled).astype(np.uint8)
    return GrayVolume(out, v.spacing, v.origin)


def window_values(hu, w: WindowSpec = WindowSpec()) -> np.ndarray:
    """Elementwise windowing of raw HU values (array or scalar)."""
    h = np.clip(np.asarray(hu, dtype=np.float64), w.lo_hu, w.hi_hu)
    return round_half_up(w.out_max * (h - w.lo_hu) / (w.hi_hu - w.lo_hu)).astype(np.int64)


# --------------------------------------------------------------------------
# Resampling


def _linear_weights(n_src: int, positions: np.ndarray):
    """Indices and weights for 1-D linear interpolation.

    Positions outside ``[0, n_src - 1]`` take the nearest edge value.
    """
    p = np.clip(positions, 0.0, n_src - 1)
    lo = np.floor(p).astype(np.intp)
    lo = np.minimum(lo, n_src - 1)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = p - lo
    return lo, hi, frac


def _interp_axis(a: np.ndarray, axis: int, positions: np.ndarray) -> np.ndarray:
    lo, hi, frac = _linear_weights(a.shape[axis], positions)
    shape = [1] * a.ndim
    shape[axis] = -1
    frac = frac.reshape(shape)
    a_lo = np.take(a, lo, axis=axis)
    a_hi = np.take(a, hi, axis=axis)
    return a_lo + (a_hi - a_lo) * frac


def resample_sample_points(v: CtVolume, target_mm: float = 1.0):
    """Source voxel coordinates ``(xs, ys, zs)`` sampled by :func:`resample_isotropic`.

    Output voxel ``n`` along an axis sits at world ``origin + n * target``;
    in source index space that is ``n * target / s``, clamped to the source
    extent.
    """
    out = []
    for n, s in zip(v.dims, v.spacing):
        m = max(1, int(round_half_up(n * s / target_mm)))
        pos = np.arange(m, dtype=np.float64) * (target_mm / s)
        out.append(np.clip(pos, 0.0, n - 1))
    return tuple(out)


def resample_isotropic(v: CtVolume, target_mm: float = 1.0) -> CtVolume:
    """Trilinear resampling onto an isotropic ``target_mm`` grid.

    Output dims are ``round(dim * spacing / target)`` (at least 1) and the
    origin is preserved. Samples beyond the last source voxel centre, and
    every sample along a single-voxel axis, take the nearest edge value.
    """
    if not target_mm > 0:
        raise ValueError(f"target_mm must be > 0, got {target_mm}")
    xs, ys, zs = resample_sample_points(v, target_mm)
    a = v.voxels.astype(np.float64)
    # separable passes: x, then y, then z (array axes 2, 1, 0)
    a = _interp_axis(a, 2, xs)
    a = _interp_axis(a, 1, ys)
    a = _interp_axis(a, 0, zs)
    return CtVolume(a, (target_mm,) * 3, v.origin)


# --------------------------------------------------------------------------
# MIP slabs


def mip_windows(n: int, k: int, stride: int):
    """Half-open ``[start, stop)`` source windows for a slab stack."""
    if k > n:
        return [(0, n)]
    return [(s, min(s + k, n)) for s in range(0, n, stride)]


def mip_slab(g: GrayVolume, spec: MipSpec = MipSpec()) -> list:
    """Maximum intensity projection slabs along ``spec.axis``.

    Slab ``i`` is the elementwise max over source slices
    ``[i*stride, i*stride + k)`` with ``k = round(thickness / voxel)``; the
    trailing slabs use whatever slices remain.
    """
    comp = _FIXED_COMPONENT[spec.axis]
    voxel_mm = g.spacing[comp]
    if not g.is_isotropic(1e-6):
        raise ValueError(f"mip_slab expects an isotropic volume, spacing={g.spacing}")
    k = max(1, int(round_half_up(spec.thickness_mm / voxel_mm)))
    stride = max(1, int(round_half_up(spec.stride_mm / voxel_mm)))
    arr_axis = 2 - comp
    n = g.voxels.shape[arr_axis]
    slabs = []
    for idx, (start, stop) in enumerate(mip_windows(n, k, stride)):
        sl = [slice(None)] * 3
        sl[arr_axis] = slice(start, stop)
        pixels = g.voxels[tuple(sl)].max(axis=arr_axis)
        position = 0.5 * (start + stop - 1)
        slabs.append(GraySlice(pixels, spec.axis, idx, position, _in_plane_spacing(g, spec.axis)))
    return slabs


# --------------------------------------------------------------------------
# Geometry


def voxel_to_world(v: CtVolume, idx) -> np.ndarray:
    """``origin + idx * spacing``; ``idx`` may be fractional but must lie in the grid."""
    p = np.asarray(idx, dtype=np.float64)
    dims = np.asarray(v.dims, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"index must have 3 components, got shape {p.shape}")
    if np.any(p < 0) or np.any(p > dims - 1):
        raise IndexError(f"voxel index {tuple(p)} outside dims {v.dims}")
    return np.asarray(v.origin) + p * np.asarray(v.spacing)


def world_to_voxel(v: CtVolume, point, tol: float = 1e-9) -> np.ndarray:
    """Inverse of :func:`voxel_to_world` (continuous voxel coordinates).

    Components within ``tol`` of an integer are snapped to it, so integer
    indices survive the float round trip exactly.
    """
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"point must have 3 components, got shape {p.shape}")
    idx = (p - np.asarray(v.origin)) / np.asarray(v.spacing)
    nearest = np.rint(idx)
    idx = np.where(np.abs(idx - nearest) <= tol, nearest, idx)
    dims = np.asarray(v.dims, dtype=np.float64)
    if np.any(idx < -tol) or np.any(idx > dims - 1 + tol):
        raise IndexError(f"world point {tuple(p)} outside the volume bounding box")
    return idx


def _in_plane_spacing(v: CtVolume, axis: PlaneAxis) -> Tuple[float, float]:
    sx, sy, sz = v.spacing
    if axis is PlaneAxis.AXIAL:
        return (sy, sx)
    if axis is PlaneAxis.CORONAL:
        return (sz, sx)
    return (sz, sy)


def plane_extent(v: CtVolume, axis: PlaneAxis) -> int:
    return v.dims[_FIXED_COMPONENT[axis]]


def slice_to_voxel(axis: PlaneAxis, position: float, row: float, col: float) -> np.ndarray:
    """Map slice pixel ``(row, col)`` at ``position`` back to voxel ``(i, j, k)``.

    axial: (row, col) = (y, x); coronal: (z, x); sagittal: (z, y).
    """
    if axis is PlaneAxis.AXIAL:
        return np.array([col, row, position], dtype=np.float64)
    if axis is PlaneAxis.CORONAL:
        return np.array([col, position, row], dtype=np.float64)
    return np.array([position, col, row], dtype=np.float64)


def voxel_to_slice(axis: PlaneAxis, idx) -> Tuple[float, float, float]:
    """Inverse of :func:`slice_to_voxel`: returns ``(position, row, col)``."""
    i, j, k = idx
    if axis is PlaneAxis.AXIAL:
        return (k, j, i)
    if axis is PlaneAxis.CORONAL:
        return (j, k, i)
    return (i, k, j)


def extract_plane_slice(g: CtVolume, axis: PlaneAxis, index: int) -> GraySlice:
    """Slice ``index`` of ``axis``; see :func:`slice_to_voxel` for the pixel map."""
    n = plane_extent(g, axis)
    if not 0 <= index < n:
        raise IndexError(f"{axis.value} slice {index} outside [0, {n})")
    if axis is PlaneAxis.AXIAL:
        pixels = g.voxels[index, :, :]
    elif axis is PlaneAxis.CORONAL:
        pixels = g.voxels[:, index, :]
    else:
        pixels = g.voxels[:, :, index]
    return GraySlice(pixels, axis, index, float(index), _in_plane_spacing(g, axis))


def plane_slices(g: CtVolume, axis: PlaneAxis) -> list:
    return [extract_plane_slice(g, axis, i) for i in range(plane_extent(g, axis))]


def stack_plane(slices: Sequence[np.ndarray], axis: PlaneAxis) -> np.ndarray:
    """Reassemble per-slice 2-D arrays of ``axis`` into a ``(nz, ny, nx)`` array."""
    arr_axis = 2 - _FIXED_COMPONENT[axis]
    return np.stack(list(slices), axis=arr_axis)


def slice_pixel_to_world(v: CtVolume, s: GraySlice, row: float, col: float) -> np.ndarray:
    return voxel_to_world(v, slice_to_voxel(s.axis, s.position, row, col))
