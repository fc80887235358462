"""Candidate scoring with the classifier network or the heuristic scorer."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..detect.boxes import Candidate
from ..nnet import Network, forward
from ..volume import CtVolume
from .cube import Cube32, extract_cube
from .scorer import heuristic_score

# keeps probabilities strictly inside (0, 1) when the logit saturates
_P_FLOOR = 1e-15


def classify_cube(net: Network, cube) -> float:
    """Nodule probability of one cube (dropout inactive)."""
    data = cube.data if isinstance(cube, Cube32) else np.asarray(cube, dtype=np.float64)
    x = data.reshape(net.input_shape)
    p = float(forward(net, x).reshape(-1)[0])
    return float(np.clip(p, _P_FLOOR, 1.0 - _P_FLOOR))


@dataclass(frozen=True)
class CubeParams:
    margin_vox: int = 4
    use_mask: bool = False


def score_candidates(
    v: CtVolume,
    cands: Sequence[Candidate],
    scorer: Optional[Callable[[Cube32], float]] = None,
    params: CubeParams = CubeParams(),
    mask: Optional[np.ndarray] = None,
    threads: int = 1,
) -> List[Candidate]:
    """Attach ``fpr_score`` to every candidate; order is preserved."""
    scorer = scorer or heuristic_score

    def one(c):
        cube = extract_cube(v, c, params.margin_vox, params.use_mask, mask)
        return c.with_fpr(scorer(cube))

    if threads > 1 and len(cands) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, cands))
    return [one(c) for c in cands]
