"""Per-plane candidate detection and the detector-side learning components."""

from .augment import Affine, AugmentOp, augment, augment_pixels, random_affine
from .boxes import (
    PLANE_SOURCE,
    Box2D,
    Candidate,
    DetectorPort,
    GroupParams,
    ReferenceBlobDetector,
    Source,
    detect_slice,
    group_boxes,
    reference_blob_detect,
    sort_candidates,
)
from .losses import dice_loss
from .scaling import EFFICIENTNET_B4, ScalingParams, ScalingResult, compound_scaling
from .unetpp import UnetPPTopology, build_unetpp_topology

__all__ = [
    "Affine",
    "AugmentOp",
    "Box2D",
    "Candidate",
    "DetectorPort",
    "EFFICIENTNET_B4",
    "GroupParams",
    "PLANE_SOURCE",
    "ReferenceBlobDetector",
    "ScalingParams",
    "ScalingResult",
    "Source",
    "UnetPPTopology",
    "augment",
    "augment_pixels",
    "build_unetpp_topology",
    "compound_scaling",
    "detect_slice",
    "dice_loss",
    "group_boxes",
    "random_affine",
    "reference_blob_detect",
    "sort_candidates",
]
