"""Compound depth/width/resolution scaling of the detector backbone."""

from __future__ import annotations

from dataclasses import dataclass

# Coefficients of the B4 backbone variant used by the detector.
EFFICIENTNET_B4 = {"width": 1.4, "depth": 1.8, "resolution": 380, "dropout": 0.4}


@dataclass(frozen=True)
class ScalingParams:
    mu: float
    alpha: float = 1.2
    beta: float = 1.1
    gamma: float = 1.15
    tol: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass(frozen=True)
class ScalingResult:
    depth: float
    width: float
    resolution: float
    constraint: float  # alpha * beta^2 * gamma^2
    residual: float  # |constraint - 2|
    violated: bool


def compound_scaling(p: ScalingParams) -> ScalingResult:
    """Depth, width and resolution multipliers ``alpha**mu``, ``beta**mu``, ``gamma**mu``.

    The FLOP budget grows as ``(alpha * beta**2 * gamma**2) ** mu``, which the
    scaling rule keeps near ``2 ** mu``; ``violated`` flags a product further
    than ``tol`` from 2.
    """
    constraint = p.alpha * p.beta**2 * p.gamma**2
    residual = abs(constraint - 2.0)
    return ScalingResult(
        depth=p.alpha**p.mu,
        width=p.beta**p.mu,
        resolution=p.gamma**p.mu,
        constraint=constraint,
        residual=residual,
        violated=residual > p.tol,
    )
