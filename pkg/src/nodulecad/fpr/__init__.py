"""False-positive reduction: cubes, the multi-scale dense classifier, scorers."""

from .classify import CubeParams, classify_cube, score_candidates
from .cube import CUBE_SIZE, MARGINS, Cube32, cube_box, extract_cube
from .msdnet import LOGIT_NODE, MsdNetSpec, build_msdnet
from .scorer import bce_loss, cube_statistics, heuristic_score

__all__ = [
    "CUBE_SIZE", "CubeParams", "Cube32", "LOGIT_NODE", "MARGINS", "MsdNetSpec", "bce_loss",
    "build_msdnet", "classify_cube", "cube_box", "cube_statistics", "extract_cube",
    "heuristic_score", "score_candidates",
]
