"""KdV predictor profile and the consistency residual of the predictor."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainTooSmall
from .grid import Grid


@dataclass(frozen=True)
class KdvProfileSpec:
    d1: float
    d2: float

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise ValueError("KdV coefficients d1, d2 must be positive")

    @classmethod
    def from_moments(cls, moments) -> "KdvProfileSpec":
        return cls(moments.d1, moments.d2)

    @property
    def amplitude(self) -> float:
        return 3.0 * self.d1 / (2.0 * self.d2)

    @property
    def decay_rate(self) -> float:
        return math.sqrt(self.d1)

    def __call__(self, x):
        return self.amplitude / np.cosh(0.5 * self.decay_rate * np.asarray(x)) ** 2


def kdv_profile(spec: KdvProfileSpec, grid: Grid) -> np.ndarray:
    """Sample the even homoclinic solution of W'' = d1 W - d2 W**2."""
    edge = 1.0 / math.cosh(0.5 * spec.decay_rate * grid.L_dom) ** 2
    if not edge < 1e-12:
        raise DomainTooSmall(
            f"W0(L_dom)/W0(0) = {edge:.2e} >= 1e-12; use L_dom >= {30 / spec.decay_rate:.4g}")
    return spec(grid.x)


def kdv_ode_residual(p: np.ndarray, d1: float, d2: float, grid: Grid) -> float:
    return grid.l2_norm(grid.derivative(p, 2) - d1 * p + d2 * p * p)


@dataclass(frozen=True)
class ConsistencyReport:
    epsilon: float
    norm_K: float
    norm_E: float

    @property
    def total(self) -> float:
        return self.norm_K + self.norm_E


def consistency_residual(ctx) -> ConsistencyReport:
    """Norms of K = (Q[W0] - B W0)/eps^2 and E = P[W0] for an operator context."""
    K, E = ctx.consistency_terms()
    return ConsistencyReport(ctx.epsilon, ctx.grid.l2_norm(K), ctx.grid.l2_norm(E))
