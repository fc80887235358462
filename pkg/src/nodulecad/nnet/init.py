"""Seeded weight initialisation for test fixtures and demos."""

from __future__ import annotations

from typing import Dict

import numpy as np

from .graph import Network

# std of a unit normal truncated to [-2, 2]; dividing by it restores the
# requested std after truncation
_TRUNC_STD = 0.87962566103423978


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Truncated normal with std ``sqrt(2 / fan_in)``; draws beyond 2 std are redrawn."""
    std = np.sqrt(2.0 / fan_in) / _TRUNC_STD
    z = rng.standard_normal(shape)
    bad = np.abs(z) > 2.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 2.0
    return z * std


def init_weights(net: Network, seed: int = 0, random_stats: bool = False) -> Dict[str, np.ndarray]:
    """Build a weight dict for ``net``.

    Conv and dense kernels are he-normal; biases and BN shifts are zero, BN
    scales one. With ``random_stats`` the BN running statistics are drawn
    at random too (useful for executor comparisons), otherwise mean 0 and
    var 1.
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for key, (shape, _) in net.param_shapes().items():
        pname = key.rsplit(".", 1)[1]
        if pname == "weight":
            fan_in = int(np.prod(shape[1:]))
            weights[key] = he_normal(rng, shape, fan_in)
        elif pname in ("bias", "beta"):
            weights[key] = rng.normal(0.0, 0.1, shape) if random_stats else np.zeros(shape)
        elif pname == "gamma":
            weights[key] = rng.uniform(0.5, 1.5, shape) if random_stats else np.ones(shape)
        elif pname == "mean":
            weights[key] = rng.normal(0.0, 0.5, shape) if random_stats else np.zeros(shape)
        elif pname == "var":
            weights[key] = rng.uniform(0.5, 2.0, shape) if random_stats else np.ones(shape)
        else:
            raise KeyError(f"no initialiser for parameter {key!r}")
    return weights
