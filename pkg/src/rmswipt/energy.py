"""Nonlinear energy-harvesting transfer function and its inverse.

The harvester maps received RF power to harvested power through a
normalized logistic curve that saturates at the circuit's maximum
harvest level. Both the forward map and its closed-form inverse are
evaluated in overflow-safe log form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EhParams", "harvest", "harvest_inverse"]


@dataclass(frozen=True)
class EhParams:
    """Energy-harvesting circuit parameters for one user.

    max_harvest : saturation level of the harvester (W)
    circuit_a   : logistic steepness (1/W)
    circuit_b   : logistic midpoint, input power of steepest slope (W)
    """

    max_harvest: float = 0.024
    circuit_a: float = 150.0
    circuit_b: float = 0.024

    def __post_init__(self):
        if self.max_harvest <= 0:
            raise ValueError(f"max_harvest must be > 0, got {self.max_harvest}")
        if self.circuit_a <= 0:
            raise ValueError(f"circuit_a must be > 0, got {self.circuit_a}")
        if self.circuit_b <= 0:
            raise ValueError(f"circuit_b must be > 0, got {self.circuit_b}")

    @property
    def norm_factor(self) -> float:
        """Logistic normalization exp(ab)/(1+exp(ab)), in (0, 1)."""
        # sigmoid(ab), written to avoid exp overflow for large ab
        return float(1.0 / (1.0 + np.exp(-self.circuit_a * self.circuit_b)))

    @property
    def zero_offset(self) -> float:
        """Offset max_harvest*exp(-ab) that pins the curve to 0 at 0 input."""
        return float(self.max_harvest * np.exp(-self.circuit_a * self.circuit_b))


def harvest(p_in, params: EhParams):
    """Harvested power for nonnegative input power ``p_in`` (W).

    Accepts scalars or arrays. Strictly increasing, 0 at 0 input and
    approaching ``params.max_harvest`` from below as input grows.
    """
    p = np.asarray(p_in, dtype=float)
    if np.any(p < 0):
        raise ValueError("input power must be nonnegative")
    a, b = params.circuit_a, params.circuit_b
    # max * (1 - exp(-a p)) / (1 + exp(a (b - p))), all pieces overflow-safe
    num = -np.expm1(-a * p)
    out = params.max_harvest * num * np.exp(-np.logaddexp(0.0, a * (b - p)))
    return out if out.ndim else float(out)


def harvest_inverse(energy: float, params: EhParams) -> float:
    """Input power whose harvested power equals ``energy``.

    Valid for 0 <= energy < params.max_harvest; the saturation level
    itself is never reached at finite input power.
    """
    sat = params.max_harvest
    if energy < 0:
        raise ValueError(f"energy must be >= 0, got {energy}")
    if energy >= sat:
        raise ValueError(
            f"energy must be below the saturation level {sat}, got {energy}"
        )
    if energy == 0:
        return 0.0
    a, b = params.circuit_a, params.circuit_b
    p = b + (np.log(energy + params.zero_offset) - np.log(sat - energy)) / a
    p = max(float(p), 0.0)
    # closed form is exact in reals; guard against floating-point drift
    if abs(harvest(p, params) - energy) > 1e-10 * energy:
        p = _bisect_inverse(energy, params)
    return p


def _bisect_inverse(energy: float, params: EhParams) -> float:
    lo, hi = 0.0, params.circuit_b
    while harvest(hi, params) < energy:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if harvest(mid, params) < energy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
