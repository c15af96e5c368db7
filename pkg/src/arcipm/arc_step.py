"""Points on the ellipsoidal arc, the step acceptance tests, and step selection.

For an angle ``alpha`` the candidate is

    x(alpha) = x - dx sin(alpha) + ddx (1 - cos(alpha))

(likewise ``y``, ``s``), which reduces to the line update when the second
derivative is absent.  A step is acceptable when

    G_i = x_i(a) s_i(a) - gamma1 mu(a)              >= 0   for all i
    g   = x(a)^T s(a) - (1 - sin a) x^T s           >= 0
    h   = (1 - (1 - beta) sin a) x^T s - x(a)^T s(a) >= 0

and the candidate is strictly positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lp_model import Iterate
from .newton_system import DirectionPair

__all__ = [
    "BACKTRACK_RATIO",
    "ALPHA_FLOOR",
    "StepEvaluation",
    "StepTooSmall",
    "arc_point",
    "arc_point_sin",
    "evaluate_conditions",
    "select_step",
    "neighborhood_membership",
]

BACKTRACK_RATIO = 0.8
ALPHA_FLOOR = 1e-7


class StepTooSmall(RuntimeError):
    """Backtracking fell below the step floor without an acceptable point."""

    def __init__(self, last_alpha: float):
        super().__init__(f"no acceptable step above alpha = {last_alpha:.3e}")
        self.last_alpha = last_alpha


def arc_point_sin(it: Iterate, dirs: DirectionPair, sin_a: float, cos_a: float):
    """Candidate ``(x, y, s)`` from precomputed ``sin``/``cos`` of the angle."""
    f = dirs.first
    x = it.x - f.dx * sin_a
    y = it.y - f.dy * sin_a
    s = it.s - f.ds * sin_a
    sec = dirs.second
    if sec is not None:
        one_minus_cos = 1.0 - cos_a
        x = x + sec.ddx * one_minus_cos
        y = y + sec.ddy * one_minus_cos
        s = s + sec.dds * one_minus_cos
    return x, y, s


def arc_point(it: Iterate, dirs: DirectionPair, alpha: float):
    """``(x(alpha), y(alpha), s(alpha))``; ``alpha = 0`` returns the iterate itself."""
    return arc_point_sin(it, dirs, math.sin(alpha), math.cos(alpha))


@dataclass(frozen=True, eq=False)
class StepEvaluation:
    alpha: float
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    mu: float
    min_G: float
    g: float
    h: float
    positive: bool

    @property
    def accepted(self) -> bool:
        return self.positive and self.min_G >= 0.0 and self.g >= 0.0 and self.h >= 0.0


def _evaluate(it: Iterate, dirs: DirectionPair, alpha: float, sin_a: float, cos_a: float,
              gamma1: float, beta: float) -> StepEvaluation:
    x, y, s = arc_point_sin(it, dirs, sin_a, cos_a)
    xs = x * s
    gap = float(x @ s)
    n = x.size
    mu_a = gap / n
    gap0 = float(it.x @ it.s)
    return StepEvaluation(
        alpha=alpha,
        x=x,
        y=y,
        s=s,
        mu=mu_a,
        min_G=float(np.min(xs - gamma1 * mu_a)),
        g=gap - (1.0 - sin_a) * gap0,
        h=(1.0 - (1.0 - beta) * sin_a) * gap0 - gap,
        positive=bool(np.all(x > 0) and np.all(s > 0)),
    )


def evaluate_conditions(it: Iterate, dirs: DirectionPair, alpha: float,
                        gamma1: float, beta: float) -> StepEvaluation:
    """All acceptance quantities at the angle ``alpha``."""
    return _evaluate(it, dirs, alpha, math.sin(alpha), math.cos(alpha), gamma1, beta)


def select_step(it: Iterate, dirs: DirectionPair, gamma1: float, beta: float,
                ratio: float = BACKTRACK_RATIO, floor: float = ALPHA_FLOOR) -> StepEvaluation:
    """Backtrack from ``alpha = pi/2`` until the candidate is acceptable.

    The search runs on ``sin(alpha)``: it starts at 1 and is multiplied by
    ``ratio`` after each rejection.  The first accepted candidate is returned.

    Raises
    ------
    StepTooSmall
        Once ``alpha`` drops below ``floor``.
    """
    sin_a = 1.0
    while True:
        alpha = math.asin(sin_a)
        if alpha < floor:
            raise StepTooSmall(alpha)
        # evaluated from alpha itself so the stored candidate re-evaluates identically
        ev = evaluate_conditions(it, dirs, alpha, gamma1, beta)
        if ev.accepted:
            return ev
        sin_a *= ratio


def neighborhood_membership(it: Iterate, gamma1: float, gamma2: float, initial_ratio: float,
                            rtol: float = 1e-12) -> bool:
    """Membership in ``N(gamma1, gamma2)``.

    ``initial_ratio`` is ``||(r_b, r_c)|| / mu`` at the starting point.  The
    residual bound holds with equality there, so ``rtol`` absorbs the
    rounding of ``ratio * mu``.
    """
    if not it.is_positive():
        return False
    if np.any(it.x * it.s < gamma1 * it.mu):
        return False
    return it.residual_norm <= initial_ratio * gamma2 * it.mu * (1.0 + rtol)
