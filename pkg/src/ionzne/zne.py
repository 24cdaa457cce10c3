"""Richardson extrapolation to zero noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import ValidationError


def richardson_gammas(factors: Sequence[float], order: int) -> np.ndarray:
    """Weights of the degree-``order`` interpolant evaluated at zero.

    These solve sum(g) = 1 and sum(g * c**k) = 0 for k = 1..order.
    """
    c = np.asarray(factors, dtype=float)
    if order < 0 or len(c) != order + 1:
        raise ValidationError(f"order {order} needs exactly {order + 1} factors, got {len(c)}")
    if len(set(c.tolist())) != len(c):
        raise ValidationError(f"duplicate scale factors {c.tolist()}")
    g = np.empty_like(c)
    for i, ci in enumerate(c):
        others = np.delete(c, i)
        g[i] = np.prod(-others / (ci - others))
    return g


def variance_amplification(gammas: Sequence[float]) -> float:
    """Shot-cost multiplier sum(g**2) for equal per-point standard errors."""
    return float(np.sum(np.square(gammas)))


@dataclass(frozen=True)
class ExtrapolationProblem:
    points: tuple[tuple[float, float, float], ...]  # (c, estimate, sem)
    order: int

    def __post_init__(self):
        pts = tuple((float(c), float(e), float(s)) for c, e, s in self.points)
        cs = [p[0] for p in pts]
        if any(c <= 0 for c in cs):
            raise ValidationError("scale factors must be positive")
        if any(b <= a for a, b in zip(cs, cs[1:])):
            raise ValidationError("scale factors must be distinct and ascending")
        if self.order < 0 or len(pts) < self.order + 1:
            raise ValidationError(f"order {self.order} needs {self.order + 1} points, have {len(pts)}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, factors, estimates, sems, order: int) -> "ExtrapolationProblem":
        return cls(tuple(zip(factors, estimates, sems)), order)


@dataclass(frozen=True)
class ExtrapolationResult:
    gammas: tuple[float, ...]
    estimate: float
    sem: float
    order: int
    points: tuple[tuple[float, float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "estimate": self.estimate,
            "sem": self.sem,
            "gammas": list(self.gammas),
            "points": [list(p) for p in self.points],
        }


def extrapolate(p: ExtrapolationProblem) -> ExtrapolationResult:
    """Exactly-determined fit through the ``order + 1`` lowest-noise points.

    The result is not clamped to any variational bound.
    """
    used = p.points[: p.order + 1]
    c = [q[0] for q in used]
    g = richardson_gammas(c, p.order)
    est = float(sum(gi * q[1] for gi, q in zip(g, used)))
    sem = math.sqrt(sum((gi * q[2]) ** 2 for gi, q in zip(g, used)))
    return ExtrapolationResult(tuple(float(x) for x in g), est, sem, p.order, used)


def extrapolate_all(points, orders: Sequence[int]) -> dict[int, ExtrapolationResult]:
    """Fits of several orders over growing lowest-noise prefixes."""
    return {m: extrapolate(ExtrapolationProblem(tuple(points), m)) for m in orders}
