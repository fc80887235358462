"""Multi-planar lung nodule CAD pipeline: preprocessing, per-plane candidate
detection with stream fusion, 3-D false-positive reduction and FROC/CPM
evaluation."""

from .detect import Candidate, Source
from .metrics import NoduleAnnotation
from .volume import CtVolume, GraySlice, GrayVolume, PlaneAxis

__version__ = "0.1.0"

__all__ = ["Candidate", "CtVolume", "GraySlice", "GrayVolume", "NoduleAnnotation", "PlaneAxis", "Source"]
