"""Seeded synthetic chest phantoms with ground-truth nodule annotations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .metrics import NoduleAnnotation
from .volume import CtVolume

# the same rule as candidate fusion: a vessel candidate of radius r swallows
# anything closer than r / 0.88
_FUSE_FACTOR = 0.88


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    dims: Tuple[int, int, int] = (256, 256, 256)
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_nodules: int = 10
    diameter_range: Tuple[float, float] = (4.0, 16.0)
    nodule_hu: float = 30.0
    ggn_count: int = 0
    ggn_hu: float = -600.0
    vessel_count: int = 8
    vessel_radius: float = 1.5
    vessel_length: Tuple[float, float] = (20.0, 50.0)
    vessel_hu: float = 50.0
    lung_hu: float = -850.0
    body_hu: float = 40.0
    air_hu: float = -1000.0
    noise_sigma: float = 25.0
    min_gap_mm: float = 10.0
    max_tries: int = 2000
    seed: int = 0
    scan_id: str = "phantom"

    def validate(self):
        lo, hi = self.diameter_range
        if lo < 3.0 or hi < lo:
            raise PhantomError("diameter_range must satisfy 3 <= lo <= hi")
        if min(self.n_nodules, self.ggn_count, self.vessel_count) < 0:
            raise PhantomError("counts must be >= 0")
        if min(self.dims) < 16:
            raise PhantomError("dims must be >= 16 on every axis")
        if min(self.spacing) <= 0:
            raise PhantomError("spacing must be > 0")
        if self.noise_sigma < 0 or self.vessel_radius <= 0:
            raise PhantomError("noise_sigma must be >= 0 and vessel_radius > 0")


def _extent_mm(spec: PhantomSpec) -> np.ndarray:
    return np.array([(n - 1) * s for n, s in zip(spec.dims, spec.spacing)], dtype=np.float64)


def lung_ellipsoids(spec: PhantomSpec):
    """``(center, semi_axes)`` of the two lungs in world mm (origin at 0)."""
    ext = _extent_mm(spec)
    mid = ext / 2.0
    axes = np.array([0.15, 0.26, 0.36]) * ext
    off = np.array([0.2 * ext[0], 0.0, 0.0])
    return [(mid - off, axes), (mid + off, axes)]


def body_ellipsoid(spec: PhantomSpec):
    ext = _extent_mm(spec)
    return ext / 2.0, np.array([0.44, 0.36, 0.44]) * ext


def _world_axes(spec: PhantomSpec):
    """Broadcastable x, y, z world coordinates for a (z, y, x) array."""
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.spacing
    x = (np.arange(nx) * sx)[None, None, :]
    y = (np.arange(ny) * sy)[None, :, None]
    z = (np.arange(nz) * sz)[:, None, None]
    return x, y, z


def _ellipsoid_alpha(spec, center, axes) -> np.ndarray:
    """Soft occupancy of an ellipsoid: 1 inside, 0 outside, linear over ~1 voxel."""
    x, y, z = _world_axes(spec)
    q = (((x - center[0]) / axes[0]) ** 2 + ((y - center[1]) / axes[1]) ** 2).astype(np.float32)
    q = q + (((z - center[2]) / axes[2]) ** 2).astype(np.float32)
    # approximate signed distance to the surface along the shortest axis
    sdist = (1.0 - np.sqrt(q)) * float(min(axes))
    return np.clip(sdist / min(spec.spacing) + 0.5, 0.0, 1.0).astype(np.float32)


def _in_ellipsoid(p, center, axes) -> bool:
    return float(((np.asarray(p) - center) / axes) @ ((np.asarray(p) - center) / axes)) < 1.0


def _sphere_points(n: int = 256) -> np.ndarray:
    """Quasi-uniform unit vectors (Fibonacci lattice)."""
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5**0.5) * k
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


_SPHERE = _sphere_points()


def _ball_in_lung(c, r, lungs) -> bool:
    for center, axes in lungs:
        if np.all(axes > r) and _in_ellipsoid(c, center, axes - r):
            pts = c + r * _SPHERE
            q = (((pts - center) / axes) ** 2).sum(axis=1)
            if np.all(q < 1.0):
                return True
    return False


def _seg_dist(p, a, b) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-12), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _blend_local(vol, spec, lo, hi, alpha_fn, hu):
    """Blend ``hu`` into ``vol`` over the world box ``[lo, hi]`` with ``alpha_fn(x, y, z)``."""
    sp = np.asarray(spec.spacing)
    dims = np.asarray(spec.dims)
    i0 = np.maximum(np.floor(lo / sp).astype(int) - 1, 0)
    i1 = np.minimum(np.ceil(hi / sp).astype(int) + 2, dims)
    if np.any(i1 <= i0):
        return
    x = (np.arange(i0[0], i1[0]) * sp[0])[None, None, :]
    y = (np.arange(i0[1], i1[1]) * sp[1])[None, :, None]
    z = (np.arange(i0[2], i1[2]) * sp[2])[:, None, None]
    a = alpha_fn(x, y, z)
    sl = (slice(i0[2], i1[2]), slice(i0[1], i1[1]), slice(i0[0], i1[0]))
    vol[sl] += a * (hu - vol[sl])


def _ball_alpha(c, r, voxel):
    def fn(x, y, z):
        d = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)
        return np.clip((r - d) / voxel + 0.5, 0.0, 1.0)

    return fn


def _tube_alpha(a, b, r, voxel):
    ab = b - a
    L2 = float(ab @ ab)

    def fn(x, y, z):
        px, py, pz = x - a[0], y - a[1], z - a[2]
        t = np.clip((px * ab[0] + py * ab[1] + pz * ab[2]) / L2, 0.0, 1.0)
        dx, dy, dz = px - t * ab[0], py - t * ab[1], pz - t * ab[2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        return np.clip((r - d) / voxel + 0.5, 0.0, 1.0)

    return fn


def _random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _sample_in_lungs(rng, lungs, inset: float) -> np.ndarray:
    center, axes = lungs[int(rng.integers(0, len(lungs)))]
    half = np.maximum(axes - inset, 0.0)
    return center + rng.uniform(-1.0, 1.0, size=3) * half


def generate_phantom(spec: PhantomSpec = PhantomSpec()) -> Tuple[CtVolume, List[NoduleAnnotation]]:
    """Body, two lungs, straight vessels and spherical nodules plus Gaussian noise.

    Nodules (solid first, then ground-glass) are rejection-sampled so that
    each ball lies inside a lung, is at least ``min_gap_mm`` from every other
    nodule surface, and stays clear of every vessel by more than the vessel
    radius plus the range within which a vessel-sized candidate would be
    fused with it. Raises :class:`PhantomError` after ``max_tries`` draws.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lungs = lung_ellipsoids(spec)
    voxel = min(spec.spacing)
    vr = spec.vessel_radius

    vessels = []
    for _ in range(spec.vessel_count):
        for _try in range(spec.max_tries):
            length = rng.uniform(*spec.vessel_length)
            mid = _sample_in_lungs(rng, lungs, vr + 2.0)
            u = _random_unit(rng)
            a, b = mid - u * length / 2, mid + u * length / 2
            if _ball_in_lung(a, vr + 1.0, lungs) and _ball_in_lung(b, vr + 1.0, lungs):
                vessels.append((a, b, length))
                break
        else:
            raise PhantomError("could not place a vessel inside the lungs (vessel_length too large for the lung field)")

    placed: List[Tuple[np.ndarray, float, bool]] = []
    kinds = [False] * spec.n_nodules + [True] * spec.ggn_count
    for ggn in kinds:
        for _try in range(spec.max_tries):
            d = rng.uniform(*spec.diameter_range)
            r = d / 2.0
            c = _sample_in_lungs(rng, lungs, r + 1.0)
            if not _ball_in_lung(c, r + 1.0, lungs):
                continue
            if any(np.linalg.norm(c - pc) <= r + pr + spec.min_gap_mm for pc, pr, _ in placed):
                continue
            ok = True
            for a, b, length in vessels:
                if _seg_dist(c, a, b) <= r + vr + spec.min_gap_mm / 2:
                    ok = False
                    break
                reach = (length / 2.0 + 4.0) / _FUSE_FACTOR
                if np.linalg.norm(c - (a + b) / 2.0) <= reach + r:
                    ok = False
                    break
            if ok:
                placed.append((c, r, ggn))
                break
        else:
            raise PhantomError(
                f"could not place nodule {len(placed) + 1} of {len(kinds)}: no lung position satisfies "
                "the non-overlap and vessel-clearance constraints"
            )

    nx, ny, nz = spec.dims
    vol = np.full((nz, ny, nx), spec.air_hu, dtype=np.float32)
    bc, ba = body_ellipsoid(spec)
    vol += _ellipsoid_alpha(spec, bc, ba) * (spec.body_hu - vol)
    for center, axes in lungs:
        vol += _ellipsoid_alpha(spec, center, axes) * (spec.lung_hu - vol)
    for a, b, _ in vessels:
        lo, hi = np.minimum(a, b) - vr - 1, np.maximum(a, b) + vr + 1
        _blend_local(vol, spec, lo, hi, _tube_alpha(a, b, vr, voxel), spec.vessel_hu)
    anns = []
    for c, r, ggn in placed:
        hu = spec.ggn_hu if ggn else spec.nodule_hu
        _blend_local(vol, spec, c - r - 1, c + r + 1, _ball_alpha(c, r, voxel), hu)
        votes = (1, 1, 1, 1) if ggn else (5, 5, 5, 5)
        anns.append(NoduleAnnotation(spec.scan_id, tuple(c), 2.0 * r, votes, 4))
    if spec.noise_sigma > 0:
        vol += rng.normal(0.0, spec.noise_sigma, size=vol.shape).astype(np.float32)
    out = np.clip(np.floor(vol + 0.5), -32768, 32767).astype(np.int16)
    return CtVolume(out, spec.spacing, (0.0, 0.0, 0.0)), anns


def lung_mask(spec: PhantomSpec) -> np.ndarray:
    """Boolean (z, y, x) mask of voxels whose centre is inside a lung."""
    x, y, z = _world_axes(spec)
    m = np.zeros((spec.dims[2], spec.dims[1], spec.dims[0]), dtype=bool)
    for center, axes in lung_ellipsoids(spec):
        q = ((x - center[0]) / axes[0]) ** 2 + ((y - center[1]) / axes[1]) ** 2 + ((z - center[2]) / axes[2]) ** 2
        m |= q < 1.0
    return m
