"""Smoothly clamped log barrier and its derivatives."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import PenetrationError


@dataclass(frozen=True)
class BarrierParams:
    """Activation distance ``d_hat`` (m) and stiffness ``kappa`` (J)."""

    d_hat: float
    kappa: float = 1.0

    def __post_init__(self):
        if not self.d_hat > 0:
            raise ValueError("d_hat must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


def barrier_derivatives(g, d_hat):
    """Unscaled barrier ``-(g - d_hat)^2 ln(g / d_hat)`` with first and second derivatives.

    Zero (with both derivatives) for ``g >= d_hat``; C2 at the clamp.
    """
    if g <= 0.0:
        raise PenetrationError(gap=g)
    if g >= d_hat:
        return 0.0, 0.0, 0.0
    r = g - d_hat
    lg = math.log(g / d_hat)
    value = -r * r * lg
    d1 = -2.0 * r * lg - r * r / g
    d2 = -2.0 * lg - 4.0 * r / g + r * r / (g * g)
    return value, d1, d2


def barrier(g, params):
    """Scaled barrier value ``kappa * phi(g)``."""
    return params.kappa * barrier_derivatives(g, params.d_hat)[0]


def barrier_grad(g, params):
    return params.kappa * barrier_derivatives(g, params.d_hat)[1]


def barrier_hess(g, params):
    return params.kappa * barrier_derivatives(g, params.d_hat)[2]


def kappa_for_gap(force, gap, d_hat):
    """Stiffness at which the barrier pushes back with ``force`` at distance ``gap``."""
    return force / abs(barrier_derivatives(gap, d_hat)[1])
