"""Scalar penalty functions, derivatives, and thresholding operators.

Three families: "lasso" (soft threshold), "scad" and "mcp" (nonconvex,
folded-concave).  All penalties are even in the coefficient; derivatives are
reported with the sign of the argument so they match finite differences of
the value, with the right-derivative (the flat lasso rate) returned at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import IllPosed, InvalidSpec

LASSO = "lasso"
SCAD = "scad"
MCP = "mcp"

DEFAULT_GAMMA = {SCAD: 3.7, MCP: 3.0}


@dataclass(frozen=True)
class PenaltySpec:
    """Family plus tuning parameters for an individual-coefficient penalty."""

    family: str
    lam: float
    gamma: float | None = None

    def __post_init__(self):
        if self.family not in (LASSO, SCAD, MCP):
            raise InvalidSpec(f"unknown penalty family {self.family!r}")
        if self.lam < 0:
            raise InvalidSpec(f"lambda must be nonnegative, got {self.lam}")
        if self.family == LASSO:
            return
        gamma = self.gamma if self.gamma is not None else DEFAULT_GAMMA[self.family]
        object.__setattr__(self, "gamma", float(gamma))
        if self.family == SCAD and self.gamma <= 2:
            raise InvalidSpec(f"scad requires gamma > 2, got {self.gamma}")
        if self.family == MCP and self.gamma <= 1:
            raise InvalidSpec(f"mcp requires gamma > 1, got {self.gamma}")

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.family, lam, self.gamma)


def penalty_value(spec: PenaltySpec, w: float) -> float:
    """Penalty at coefficient value w (nonnegative, even in w)."""
    lam, a = spec.lam, abs(w)
    if spec.family == LASSO:
        return lam * a
    gamma = spec.gamma
    if spec.family == SCAD:
        if a <= lam:
            return lam * a
        if a < gamma * lam:
            return (2 * gamma * lam * a - a * a - lam * lam) / (2 * (gamma - 1))
        return (gamma + 1) * lam * lam / 2
    # MCP
    if a <= gamma * lam:
        return lam * a - a * a / (2 * gamma)
    return gamma * lam * lam / 2


def penalty_rate(spec: PenaltySpec, magnitude: float) -> float:
    """Penalization rate d/d|w| at the given magnitude (>= 0); rate(0) = lambda."""
    lam, a = spec.lam, abs(magnitude)
    if spec.family == LASSO:
        return lam
    gamma = spec.gamma
    if spec.family == SCAD:
        if a <= lam:
            return lam
        if a < gamma * lam:
            return (gamma * lam - a) / (gamma - 1)
        return 0.0
    # MCP
    if a <= gamma * lam:
        return lam - a / gamma
    return 0.0


def penalty_derivative(spec: PenaltySpec, w: float) -> float:
    """Signed derivative of penalty_value; returns the rate lambda at w = 0."""
    if w == 0.0:
        return spec.lam
    return penalty_rate(spec, abs(w)) * math.copysign(1.0, w)


def _soft(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def scalar_threshold(spec: PenaltySpec, z: float, step_weight: float) -> float:
    """Minimizer of  0.5 * step_weight * (b - z)^2 + penalty(b)  over b.

    Lasso gives the soft threshold; MCP the firm threshold; SCAD the clipped
    three-zone rule.  Raises IllPosed when the quadratic curvature is too weak
    for the nonconvex subproblem to have a unique minimizer.
    """
    if step_weight <= 0:
        raise InvalidSpec(f"step_weight must be positive, got {step_weight}")
    lam, v = spec.lam, step_weight
    if spec.family == LASSO:
        return _soft(z, lam / v)
    gamma = spec.gamma
    if spec.family == MCP:
        if v * gamma <= 1:
            raise IllPosed(f"mcp threshold needs step_weight*gamma > 1, got {v * gamma}")
        if abs(z) > gamma * lam:
            return z
        return _soft(z, lam / v) / (1 - 1 / (gamma * v))
    # SCAD
    if v * (gamma - 1) <= 1:
        raise IllPosed(f"scad threshold needs step_weight*(gamma-1) > 1, got {v * (gamma - 1)}")
    if abs(z) > gamma * lam:
        return z
    if abs(z) <= lam + lam / v:
        return _soft(z, lam / v)
    return _soft(z, gamma * lam / (v * (gamma - 1))) / (1 - 1 / (v * (gamma - 1)))
