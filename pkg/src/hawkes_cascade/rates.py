"""Spiking rate functions: bounded, nondecreasing, C1 maps from input to rate.

The workhorse is :class:`ExpSigmoidRate`: an exponential ramp ``a*exp(b*x)``
glued C1 onto a saturating sigmoid with ceiling ``A``.  The glue point is
forced to ``x0 = log(A/(2a))/b``, where both value (A/2) and derivative
(b*A/2) match; the derivative is maximal there, so the Lipschitz constant is
``b*A/2`` in closed form.  ``PAPER_F1``/``PAPER_F2`` are the standard pair
(a=10, A=400) and (a=1, A=40).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ExpSigmoidRate:
    """a*exp(b*x) below the crossover, A / (1 + B*exp(-2b*x)) above, B = (A/2a)^2."""

    prefactor: float       # a > 0
    ceiling: float         # A > 0
    slope: float = 1.0     # b > 0

    def __post_init__(self):
        if self.prefactor <= 0 or self.ceiling <= 0 or self.slope <= 0:
            raise ValueError("prefactor, ceiling and slope must all be strictly positive")
        if self.ceiling <= 2 * self.prefactor:
            # crossover requires A/2 above the ramp start value
            raise ValueError("ceiling must exceed twice the prefactor")

    @property
    def crossover(self) -> float:
        return math.log(self.ceiling / (2.0 * self.prefactor)) / self.slope

    @property
    def _sig_coeff(self) -> float:
        return (self.ceiling / (2.0 * self.prefactor)) ** 2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a, A, b = self.prefactor, self.ceiling, self.slope
        ramp = a * np.exp(b * np.minimum(x, self.crossover))
        sig = A / (1.0 + self._sig_coeff * np.exp(-2.0 * b * np.maximum(x, self.crossover)))
        out = np.where(x < self.crossover, ramp, sig)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        a, A, b = self.prefactor, self.ceiling, self.slope
        ramp = a * b * np.exp(b * np.minimum(x, self.crossover))
        u = self._sig_coeff * np.exp(-2.0 * b * np.maximum(x, self.crossover))
        sig = 2.0 * b * A * u / (1.0 + u) ** 2
        out = np.where(x < self.crossover, ramp, sig)
        return float(out) if out.ndim == 0 else out

    def sup(self) -> float:
        return self.ceiling

    def lipschitz(self) -> float:
        # derivative is maximal at the crossover on both branches
        return self.slope * self.ceiling / 2.0


@dataclass(frozen=True)
class ConstantRate:
    """Rate pinned at a nonnegative constant; derivative and Lipschitz constant are zero."""

    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("constant rate must be nonnegative")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.value)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        return float(out) if out.ndim == 0 else out

    def sup(self) -> float:
        return self.value

    def lipschitz(self) -> float:
        return 0.0


PAPER_F1 = ExpSigmoidRate(prefactor=10.0, ceiling=400.0)
PAPER_F2 = ExpSigmoidRate(prefactor=1.0, ceiling=40.0)

RateFunction = ExpSigmoidRate | ConstantRate


def rate_pack(rate: RateFunction) -> tuple[int, float, float, float, float, float, float]:
    """Flatten a rate to (kind, a, A, b, x0, B, sup) for the jit simulation kernels."""
    if isinstance(rate, ExpSigmoidRate):
        return (0, rate.prefactor, rate.ceiling, rate.slope,
                rate.crossover, rate._sig_coeff, rate.sup())
    if isinstance(rate, ConstantRate):
        return (1, rate.value, 0.0, 0.0, 0.0, 0.0, rate.value)
    raise TypeError(f"unknown rate function {rate!r}")
