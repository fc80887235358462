from __future__ import annotations

from typing import Tuple

import numpy as np


def dice_loss(pred, target, eps: float = 1.0) -> Tuple[float, np.ndarray]:
    """Smoothed soft dice loss and its gradient with respect to ``pred``.

    ``loss = 1 - (2 * sum(p * t) + eps) / (sum(p) + sum(t) + eps)``
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"pred shape {p.shape} != target shape {t.shape}")
    if not eps > 0:
        raise ValueError("eps must be > 0")
    inter = float((p * t).sum())
    denom = float(p.sum() + t.sum()) + eps
    num = 2.0 * inter + eps
    loss = 1.0 - num / denom
    grad = -(2.0 * t * denom - num) / (denom * denom)
    return loss, grad
