"""2-D box detection per plane and grouping of boxes into 3-D candidates."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..lungseg import connected_components
from ..volume import CtVolume, GraySlice, PlaneAxis, slice_to_voxel, voxel_to_world


class Source(enum.Enum):
    AXIAL_1MM = "Axial1mm"
    CORONAL_1MM = "Coronal1mm"
    SAGITTAL_1MM = "Sagittal1mm"
    AXIAL_MIP_10MM = "AxialMip10mm"
    FUSED = "Fused"


PLANE_SOURCE = {
    PlaneAxis.AXIAL: Source.AXIAL_1MM,
    PlaneAxis.CORONAL: Source.CORONAL_1MM,
    PlaneAxis.SAGITTAL: Source.SAGITTAL_1MM,
}


@dataclass(frozen=True)
class Box2D:
    """Inclusive pixel bounding box on one slice.

    ``position`` is the voxel coordinate along the slicing axis (equal to
    ``slice_index`` for ordinary slices, the slab centre for MIP slabs).
    """

    slice_index: int
    axis: PlaneAxis
    row_min: int
    row_max: int
    col_min: int
    col_max: int
    score: float
    position: Optional[float] = None

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"box bounds inverted: {self}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"box score {self.score} outside [0, 1]")
        if self.position is None:
            object.__setattr__(self, "position", float(self.slice_index))

    @property
    def center(self) -> Tuple[float, float]:
        return 0.5 * (self.row_min + self.row_max), 0.5 * (self.col_min + self.col_max)

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1


@dataclass(frozen=True)
class Candidate:
    scan_id: str
    center: Tuple[float, float, float]
    radius_mm: float
    score: float
    source: Source
    fpr_score: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius_mm > 0:
            raise ValueError(f"candidate radius must be > 0, got {self.radius_mm}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"candidate score {self.score} outside [0, 1]")
        if self.fpr_score is not None and not 0.0 <= self.fpr_score <= 1.0:
            raise ValueError(f"fpr_score {self.fpr_score} outside [0, 1]")

    def with_source(self, source: Source) -> "Candidate":
        return replace(self, source=source)

    def with_fpr(self, fpr_score: float) -> "Candidate":
        return replace(self, fpr_score=float(fpr_score))


class DetectorPort(Protocol):
    """Anything that turns a windowed slice into scored boxes.

    Implementations must be deterministic and safe for concurrent use.
    """

    def detect(self, s: GraySlice) -> List[Box2D]: ...


def reference_blob_detect(
    s: GraySlice,
    thresh: float = 100,
    min_area: int = 3,
    max_area: int = 700,
    connectivity: int = 8,
    min_fill: float = 0.0,
) -> List[Box2D]:
    """Bounding boxes of bright connected components.

    Components of ``pixels >= thresh`` whose pixel count lies in
    ``[min_area, max_area]`` become boxes scored by mean intensity / 255.
    ``min_fill`` additionally drops components covering less than that
    fraction of their bounding box (rings, thin oblique streaks).
    """
    if not 0 <= thresh <= 255:
        raise ValueError(f"thresh must be in [0, 255], got {thresh}")
    pixels = s.pixels
    labels, regions = connected_components(pixels >= thresh, connectivity)
    if not regions:
        return []
    sums = np.bincount(labels.ravel(), weights=pixels.ravel().astype(np.float64))
    boxes = []
    for reg in regions:
        if not min_area <= reg.area <= max_area:
            continue
        r0, r1, c0, c1 = reg.bbox
        if reg.area < min_fill * (r1 - r0 + 1) * (c1 - c0 + 1):
            continue
        score = min(1.0, sums[reg.label] / reg.area / 255.0)
        boxes.append(Box2D(s.index, s.axis, r0, r1, c0, c1, score, s.position))
    return boxes


@dataclass(frozen=True)
class ReferenceBlobDetector:
    thresh: float = 100
    min_area: int = 3
    max_area: int = 700
    connectivity: int = 8
    min_fill: float = 0.0

    def detect(self, s: GraySlice) -> List[Box2D]:
        return reference_blob_detect(s, self.thresh, self.min_area, self.max_area, self.connectivity, self.min_fill)


def detect_slice(s: GraySlice, detector: DetectorPort) -> List[Box2D]:
    return list(detector.detect(s))


@dataclass(frozen=True)
class GroupParams:
    link_dist_mm: float = 5.0
    # source slices per MIP slab; a chain of slabs overstates axial extent by k - 1
    slab_slices: int = 1
    # chains longer than this along the slicing axis (mm) are dropped as
    # elongated structures; None keeps every chain
    max_extent_mm: Optional[float] = None

    def __post_init__(self):
        if self.link_dist_mm < 0:
            raise ValueError("link_dist_mm must be >= 0")
        if self.slab_slices < 1:
            raise ValueError("slab_slices must be >= 1")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def groups(self) -> List[List[int]]:
        out: dict = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return list(out.values())


def _axis_spacing(v: CtVolume, axis: PlaneAxis) -> Tuple[float, float, float]:
    """``(along-axis, row, col)`` spacing in mm."""
    sx, sy, sz = v.spacing
    if axis is PlaneAxis.AXIAL:
        return sz, sy, sx
    if axis is PlaneAxis.CORONAL:
        return sy, sz, sx
    return sx, sz, sy


def group_boxes(
    boxes: Sequence[Box2D],
    geometry: CtVolume,
    gp: GroupParams = GroupParams(),
    scan_id: str = "",
    source: Optional[Source] = None,
) -> List[Candidate]:
    """Chain boxes on consecutive slices into 3-D candidates.

    Two boxes link when their slice indices differ by one and their in-plane
    centres are within ``gp.link_dist_mm``; chains are the connected
    components of that relation. A candidate's centre is the score-weighted
    mean of its member box centres, its radius half the larger of the widest
    box side and the chain extent along the slicing axis, and its score the
    best member score.
    """
    boxes = list(boxes)
    if not boxes:
        return []
    axis = boxes[0].axis
    if any(b.axis is not axis for b in boxes):
        raise ValueError("group_boxes expects boxes from a single plane")
    if source is None:
        source = PLANE_SOURCE[axis]
    s_axis, s_row, s_col = _axis_spacing(geometry, axis)

    by_slice: dict = {}
    for n, b in enumerate(boxes):
        by_slice.setdefault(b.slice_index, []).append(n)

    uf = _UnionFind(len(boxes))
    for k, members in by_slice.items():
        for a in members:
            ra, ca = boxes[a].center
            for b in by_slice.get(k + 1, ()):
                rb, cb = boxes[b].center
                if np.hypot((ra - rb) * s_row, (ca - cb) * s_col) <= gp.link_dist_mm:
                    uf.union(a, b)

    out = []
    for group in uf.groups():
        members = sorted((boxes[n] for n in group), key=_box_key)
        centers = np.array(
            [
                voxel_to_world(geometry, slice_to_voxel(axis, b.position, *b.center))
                for b in members
            ]
        )
        weights = np.array([b.score for b in members], dtype=np.float64)
        weights = weights / weights.max() if weights.max() > 0 else np.ones_like(weights)
        center = (weights[:, None] * centers).sum(axis=0) / weights.sum()
        side = max(max(b.height * s_row, b.width * s_col) for b in members)
        pos = [b.position for b in members]
        n_slices = max(pos) - min(pos) + 1 - (gp.slab_slices - 1)
        extent = max(1.0, n_slices) * s_axis
        if gp.max_extent_mm is not None and extent > gp.max_extent_mm:
            continue
        out.append(
            Candidate(
                scan_id=scan_id,
                center=tuple(center),
                radius_mm=0.5 * max(side, extent),
                score=max(b.score for b in members),
                source=source,
            )
        )
    return sort_candidates(out)


def _box_key(b: Box2D):
    return (b.slice_index, b.row_min, b.row_max, b.col_min, b.col_max, b.score)


def sort_candidates(cands: Iterable[Candidate]) -> List[Candidate]:
    """Descending score, ties broken by ``(x, y, z)``."""
    return sorted(cands, key=lambda c: (-c.score, c.center))
