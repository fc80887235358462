"""Slice-wise lung parenchyma segmentation.

Masks are plain 2-D ``uint8`` arrays holding 0/1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .volume import GraySlice


@dataclass(frozen=True)
class StructuringElement:
    """``shape`` is ``"square3"`` or ``"disk"``; ``radius`` is ignored for square3."""

    shape: str = "disk"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("square3", "disk"):
            raise ValueError(f"unknown structuring element shape {self.shape!r}")
        if self.shape == "disk" and self.radius < 1:
            raise ValueError("disk radius must be >= 1")

    @classmethod
    def square3(cls) -> "StructuringElement":
        return cls("square3", 1)

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        return cls("disk", int(radius))

    @property
    def reach(self) -> int:
        return 1 if self.shape == "square3" else self.radius

    def footprint(self) -> np.ndarray:
        if self.shape == "square3":
            return np.ones((3, 3), dtype=bool)
        r = self.radius
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        return (yy * yy + xx * xx) <= r * r


SQUARE3 = StructuringElement.square3()


@dataclass(frozen=True)
class SegParams:
    close_se: StructuringElement = StructuringElement.disk(3)
    dilate_se: Optional[StructuringElement] = StructuringElement.disk(2)
    connectivity: int = 8
    # closing alone leaves nodule-sized holes; fill enclosed holes afterwards
    fill_holes: bool = True


@dataclass(frozen=True)
class Region:
    label: int
    area: int
    touches_border: bool
    bbox: Tuple[int, int, int, int]  # row_min, row_max, col_min, col_max (inclusive)


def _as_mask(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    if m.dtype != bool and not np.all((m == 0) | (m == 1)):
        raise ValueError("mask values must be 0 or 1")
    return m.astype(bool)


def dilate(m, se: StructuringElement = SQUARE3) -> np.ndarray:
    """Binary dilation, treating everything outside the image as 0."""
    out = ndimage.binary_dilation(_as_mask(m), structure=se.footprint(), border_value=0)
    return out.astype(np.uint8)


def erode(m, se: StructuringElement = SQUARE3) -> np.ndarray:
    """Binary erosion, treating everything outside the image as 0."""
    out = ndimage.binary_erosion(_as_mask(m), structure=se.footprint(), border_value=0)
    return out.astype(np.uint8)


def close(m, se: StructuringElement) -> np.ndarray:
    """Morphological closing evaluated on a zero-padded canvas, then cropped.

    Padding by twice the element reach keeps the result equal to closing on
    an unbounded plane restricted to the image, which makes it idempotent.
    """
    m = _as_mask(m)
    pad = 2 * se.reach
    big = np.pad(m, pad)
    big = ndimage.binary_dilation(big, structure=se.footprint(), border_value=0)
    big = ndimage.binary_erosion(big, structure=se.footprint(), border_value=0)
    return big[pad:-pad, pad:-pad].astype(np.uint8)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def connected_components(m, connectivity: int = 8) -> Tuple[np.ndarray, List[Region]]:
    """Label set pixels; labels are dense from 1 in raster order of first pixel."""
    m = _as_mask(m)
    labels, n = ndimage.label(m, structure=_structure(connectivity))
    regions = []
    h, w = m.shape
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        r0, r1 = sl[0].start, sl[0].stop - 1
        c0, c1 = sl[1].start, sl[1].stop - 1
        area = int(np.count_nonzero(labels[sl] == lab))
        touches = r0 == 0 or c0 == 0 or r1 == h - 1 or c1 == w - 1
        regions.append(Region(lab, area, touches, (r0, r1, c0, c1)))
    return labels, regions


def clear_border(m, connectivity: int = 8) -> np.ndarray:
    """Drop every component that reaches row 0, row H-1, col 0 or col W-1."""
    labels, regions = connected_components(m, connectivity)
    drop = [r.label for r in regions if r.touches_border]
    keep = (labels > 0) & ~np.isin(labels, drop)
    return keep.astype(np.uint8)


def threshold_below_mean(pixels: np.ndarray) -> np.ndarray:
    p = np.asarray(pixels, dtype=np.float64)
    return (p < p.mean()).astype(np.uint8)


def segment_lung_slice(s, p: SegParams = SegParams()) -> np.ndarray:
    """Rough parenchyma mask of one windowed slice.

    Pixels strictly darker than the slice mean are kept, components touching
    the image border are removed, holes are closed (and filled when
    ``p.fill_holes``), then the mask is dilated to keep boundary texture.
    """
    pixels = s.pixels if isinstance(s, GraySlice) else np.asarray(s)
    m = threshold_below_mean(pixels)
    if not m.any():
        return m
    m = clear_border(m, p.connectivity)
    m = close(m, p.close_se)
    if p.fill_holes:
        m = ndimage.binary_fill_holes(m).astype(np.uint8)
    if p.dilate_se is not None:
        m = dilate(m, p.dilate_se)
    return m


def apply_mask(s, m, fill: int = 0):
    """Keep pixels under the mask, replace the rest with ``fill``."""
    pixels = s.pixels if isinstance(s, GraySlice) else np.asarray(s)
    m = np.asarray(m)
    if m.shape != pixels.shape:
        raise ValueError(f"mask shape {m.shape} does not match slice shape {pixels.shape}")
    out = np.where(m.astype(bool), pixels, np.asarray(fill, dtype=pixels.dtype))
    return s.with_pixels(out) if isinstance(s, GraySlice) else out
