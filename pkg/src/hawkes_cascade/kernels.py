"""Erlang memory kernels, synaptic wiring, and branching criticality.

An Erlang kernel ``c * exp(-nu*t) * t**eta / eta!`` is the memory a
population keeps of one presynaptic spike.  A :class:`KernelMatrix` wires
kernels between populations; from it and the rate functions' Lipschitz
constants one builds the offspring matrix whose Perron root separates
subcritical from supercritical growth of the mean activity, and (in the
supercritical case) the exponential growth rate ``alpha0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

CRITICAL_TOL = 1e-9          # |mu1 - 1| below this is treated as the critical boundary
_POWER_TOL = 1e-12           # relative tolerance of the power iteration
_POWER_MAX_ITER = 100_000
_ALPHA0_TOL = 1e-10          # bisection tolerance on alpha0


class NotSupercriticalError(ValueError):
    """Raised when alpha0 is requested for a system with spectral radius <= 1."""


@dataclass(frozen=True)
class ErlangKernel:
    """Memory kernel c * exp(-nu*t) * t**eta / eta! with c in {-1,+1}."""

    sign: int
    rate: float
    order: int

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be -1 or +1, got {self.sign}")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be strictly positive, got {self.rate}")
        if self.order != int(self.order) or self.order < 0:
            raise ValueError(f"order must be a nonnegative integer, got {self.order}")


def erlang_eval(kernel: ErlangKernel, t: float) -> float:
    """Pointwise kernel value c * exp(-nu*t) * t**eta / eta! for t >= 0."""
    if t < 0:
        raise ValueError(f"kernel argument must be nonnegative, got {t}")
    eta = kernel.order
    if eta == 0:
        poly = 1.0
    elif t == 0.0:
        poly = 0.0
    else:
        poly = t ** eta / math.factorial(eta)
    return kernel.sign * math.exp(-kernel.rate * t) * poly


def erlang_l1_norm(kernel: ErlangKernel) -> float:
    """Integral of |kernel| over [0, inf): the gamma integral 1 / nu**(eta+1)."""
    return kernel.rate ** -(kernel.order + 1)


def erlang_laplace_l1(kernel: ErlangKernel, alpha: float) -> float:
    """Integral of exp(-alpha*t) * |kernel(t)| over [0, inf): 1 / (nu+alpha)**(eta+1)."""
    return (kernel.rate + alpha) ** -(kernel.order + 1)


@dataclass(frozen=True)
class KernelMatrix:
    """n x n wiring of optional Erlang kernels; entries[k][l] is the memory of l kept by k."""

    n: int
    entries: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("population count must be >= 1")
        if len(self.entries) != self.n or any(len(row) != self.n for row in self.entries):
            raise ValueError("entries must be an n x n grid")
        for row in self.entries:
            for entry in row:
                if entry is not None and not isinstance(entry, ErlangKernel):
                    raise TypeError("entries must be ErlangKernel or None")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Optional[ErlangKernel]]]) -> "KernelMatrix":
        return cls(n=len(rows), entries=tuple(tuple(row) for row in rows))

    @classmethod
    def cyclic(cls, kernels: Sequence[ErlangKernel]) -> "KernelMatrix":
        """Cyclic feedback wiring: population k listens only to k+1 (mod n)."""
        n = len(kernels)
        rows = [[None] * n for _ in range(n)]
        for k, kern in enumerate(kernels):
            rows[k][(k + 1) % n] = kern
        return cls.from_rows(rows)


def _lipschitz_vector(n: int, lipschitz) -> np.ndarray:
    """Accept one global constant or one constant per population."""
    if np.isscalar(lipschitz):
        vec = np.full(n, float(lipschitz))
    else:
        vec = np.asarray(lipschitz, dtype=float)
        if vec.shape != (n,):
            raise ValueError(f"need {n} Lipschitz constants, got shape {vec.shape}")
    if np.any(vec < 0):
        raise ValueError("Lipschitz constants must be nonnegative")
    return vec


def offspring_matrix(kernels: KernelMatrix, lipschitz) -> np.ndarray:
    """Branching offspring matrix: entry (i, j) = L_j * l1norm(entries[i][j]), 0 when absent."""
    lip = _lipschitz_vector(kernels.n, lipschitz)
    out = np.zeros((kernels.n, kernels.n))
    for i, row in enumerate(kernels.entries):
        for j, entry in enumerate(row):
            if entry is not None:
                out[i, j] = lip[j] * erlang_l1_norm(entry)
    return out


def spectral_radius(matrix: np.ndarray) -> float:
    """Perron root of a nonnegative matrix.

    Power iteration from the all-ones vector on ``matrix + I``; the identity
    shift makes cyclic (imprimitive) wirings converge without changing the
    Perron root beyond the known +1 offset.  A 2x2 zero-diagonal matrix is
    handled by the exact closed form sqrt(M01*M10).
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(m < 0):
        raise ValueError("matrix must be nonnegative")
    n = m.shape[0]
    if n == 2 and m[0, 0] == 0.0 and m[1, 1] == 0.0:
        return math.sqrt(m[0, 1] * m[1, 0])

    shifted = m + np.eye(n)
    vec = np.ones(n)
    lam = 1.0
    for _ in range(_POWER_MAX_ITER):
        nxt = shifted @ vec
        lam_next = float(np.linalg.norm(nxt) / np.linalg.norm(vec))
        vec = nxt / np.linalg.norm(nxt)
        if abs(lam_next - lam) <= _POWER_TOL * max(1.0, abs(lam_next)):
            return max(lam_next - 1.0, 0.0)
        lam = lam_next
    raise RuntimeError(f"power iteration did not converge in {_POWER_MAX_ITER} iterations")


def _laplace_radius(kernels: KernelMatrix, lip: np.ndarray, alpha: float) -> float:
    """Spectral radius of the Laplace-damped offspring matrix at damping alpha."""
    out = np.zeros((kernels.n, kernels.n))
    for i, row in enumerate(kernels.entries):
        for j, entry in enumerate(row):
            if entry is not None:
                out[i, j] = lip[j] * erlang_laplace_l1(entry, alpha)
    return spectral_radius(out)


def compute_alpha0(kernels: KernelMatrix, lipschitz) -> float:
    """Unique alpha0 > 0 at which the Laplace-damped offspring matrix has Perron root 1.

    Requires the undamped system to be supercritical; the damped radius is
    continuous and strictly decreasing in alpha for Erlang kernels, so the
    root is found by bisection after doubling out an upper bracket.
    """
    lip = _lipschitz_vector(kernels.n, lipschitz)
    mu1 = spectral_radius(offspring_matrix(kernels, lip))
    if mu1 <= 1.0 + CRITICAL_TOL:
        raise NotSupercriticalError(
            f"not supercritical: spectral radius {mu1:.6g} <= 1; alpha0 undefined"
        )
    lo = 1e-9
    hi = 1.0
    while _laplace_radius(kernels, lip, hi) >= 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("alpha0 bracket expansion failed")
    while hi - lo > _ALPHA0_TOL:
        mid = 0.5 * (lo + hi)
        if _laplace_radius(kernels, lip, mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CriticalityReport:
    """Offspring matrix, its Perron root, the growth class, and alpha0 when supercritical."""

    offspring: np.ndarray
    mu1: float
    label: str                      # "subcritical" | "supercritical" | "critical-boundary"
    alpha0: Optional[float]

    def to_json_dict(self) -> dict:
        return {
            "offspring": [[float(v) for v in row] for row in self.offspring],
            "mu1": self.mu1,
            "class": self.label,
            "alpha0": self.alpha0,
        }


def classify_criticality(kernels: KernelMatrix, lipschitz) -> CriticalityReport:
    """Classify the branching regime and attach alpha0 in the supercritical case."""
    lam = offspring_matrix(kernels, lipschitz)
    mu1 = spectral_radius(lam)
    if abs(mu1 - 1.0) < CRITICAL_TOL:
        label = "critical-boundary"
        alpha0 = None
    elif mu1 < 1.0:
        label = "subcritical"
        alpha0 = None
    else:
        label = "supercritical"
        alpha0 = compute_alpha0(kernels, lipschitz)
    return CriticalityReport(offspring=lam, mu1=mu1, label=label, alpha0=alpha0)
