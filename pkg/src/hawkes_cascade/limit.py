"""Deterministic mean-field cascade: ODE, equilibrium, stability, scans.

The cyclic network of n populations with Erlang memory of orders eta_k is
equivalent to a kappa-dimensional linear cascade closed by the rate
nonlinearities, kappa = n + sum(eta_k).  State layout is population-major:

    (x[1,0], ..., x[1,eta_1], x[2,0], ..., x[n,eta_n])

where x[k,0] is the input population k feeds to its rate function and the
top coordinate x[k,eta_k] receives c_k * f_{k+1}(x[k+1,0]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import ErlangKernel, KernelMatrix
from .rates import RateFunction

EQUILIBRIUM_TOL = 1e-12        # bisection tolerance on the scalar fixed point
ROOT_RESIDUAL_TOL = 1e-8       # max acceptable characteristic-polynomial residual
HOPF_REFINE_TOL = 1e-5         # |delta nu| at which crossing refinement stops


class PositiveFeedbackError(ValueError):
    """Raised when prod(c_k) > 0: the unique-equilibrium construction needs negative feedback."""


class NoOscillationError(RuntimeError):
    """Raised when a trajectory has too few zero crossings to define a period."""


@dataclass(frozen=True)
class Population:
    """One population: memory order eta, memory rate nu, sign c, and rate function."""

    eta: int
    nu: float
    c: int
    rate: RateFunction

    def __post_init__(self):
        if self.eta != int(self.eta) or self.eta < 0:
            raise ValueError(f"eta must be a nonnegative integer, got {self.eta}")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValueError(f"nu must be strictly positive, got {self.nu}")
        if self.c not in (-1, 1):
            raise ValueError(f"c must be -1 or +1, got {self.c}")


@dataclass(frozen=True)
class CascadeParams:
    """Cyclic-feedback network; population k is driven by population k+1 (mod n)."""

    populations: tuple

    def __post_init__(self):
        if len(self.populations) < 1:
            raise ValueError("need at least one population")
        if self.kappa < 2:
            raise ValueError(f"cascade dimension kappa={self.kappa} must be >= 2")

    @classmethod
    def make(cls, populations: Sequence[Population]) -> "CascadeParams":
        return cls(populations=tuple(populations))

    @property
    def n(self) -> int:
        return len(self.populations)

    @property
    def kappa(self) -> int:
        return self.n + sum(p.eta for p in self.populations)

    @property
    def offsets(self) -> tuple:
        """Start index of each population block in the flat state vector."""
        offs = []
        pos = 0
        for p in self.populations:
            offs.append(pos)
            pos += p.eta + 1
        return tuple(offs)

    @property
    def equal_nu(self) -> Optional[float]:
        nus = {p.nu for p in self.populations}
        return self.populations[0].nu if len(nus) == 1 else None

    def kernel_matrix(self) -> KernelMatrix:
        return KernelMatrix.cyclic(
            [ErlangKernel(sign=p.c, rate=p.nu, order=p.eta) for p in self.populations]
        )

    def lipschitz_constants(self) -> np.ndarray:
        return np.array([p.rate.lipschitz() for p in self.populations])

    def state_labels(self) -> list:
        return [f"x{k + 1}_{l}" for k, p in enumerate(self.populations) for l in range(p.eta + 1)]


def vector_field(params: CascadeParams, state: np.ndarray) -> np.ndarray:
    """Right-hand side of the cascade ODE at ``state``."""
    x = np.asarray(state, dtype=float)
    if x.shape != (params.kappa,):
        raise ValueError(f"state must have length {params.kappa}, got shape {x.shape}")
    out = np.empty_like(x)
    offs = params.offsets
    n = params.n
    for k, p in enumerate(params.populations):
        o = offs[k]
        top = o + p.eta
        out[o:top + 1] = -p.nu * x[o:top + 1]
        if p.eta > 0:
            out[o:top] += x[o + 1:top + 1]
        succ = params.populations[(k + 1) % n]
        out[top] += p.c * succ.rate(x[offs[(k + 1) % n]])
    return out


@dataclass(frozen=True)
class LimitTrajectory:
    """Time grid, cascade states on the grid, and cumulative per-neuron means."""

    t: np.ndarray          # (S,)
    states: np.ndarray     # (S, kappa)
    means: np.ndarray      # (S, n), nondecreasing columns

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def state_at(self, time: float) -> np.ndarray:
        """Linear interpolation of the state between grid points."""
        return np.array([np.interp(time, self.t, self.states[:, j])
                         for j in range(self.states.shape[1])])


def default_dt(params: CascadeParams) -> float:
    """Resolve the fastest relaxation scale: min(0.01, 0.05 / max nu)."""
    return min(0.01, 0.05 / max(p.nu for p in params.populations))


def integrate(params: CascadeParams, t_end: float, dt: Optional[float] = None,
              initial: Optional[np.ndarray] = None) -> LimitTrajectory:
    """Classic RK4 on the cascade augmented with the n cumulative means.

    Starts from the all-zero state (no activity before time zero) unless
    ``initial`` is given.  Aborts with a diagnostic if the state leaves the
    finite range.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if dt is None:
        dt = default_dt(params)
    if dt <= 0:
        raise ValueError("dt must be positive")

    kappa, n = params.kappa, params.n
    offs = params.offsets
    rates = [p.rate for p in params.populations]
    x0_idx = np.array(offs)

    def rhs(y: np.ndarray) -> np.ndarray:
        out = np.empty_like(y)
        out[:kappa] = vector_field(params, y[:kappa])
        for k in range(n):
            out[kappa + k] = rates[k](y[x0_idx[k]])
        return out

    steps = int(round(t_end / dt))
    t = np.linspace(0.0, steps * dt, steps + 1)
    y = np.zeros(kappa + n)
    if initial is not None:
        y[:kappa] = np.asarray(initial, dtype=float)
    states = np.empty((steps + 1, kappa))
    means = np.empty((steps + 1, n))
    states[0] = y[:kappa]
    means[0] = y[kappa:]
    for i in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"cascade integration left the finite range at t={t[i + 1]:.6g} "
                f"(dt={dt}); state={y[:kappa]}"
            )
        states[i + 1] = y[:kappa]
        means[i + 1] = y[kappa:]
    return LimitTrajectory(t=t, states=states, means=means)


def find_equilibrium(params: CascadeParams) -> np.ndarray:
    """Unique equilibrium of the negative-feedback cascade.

    At a fixed point each block is geometric, x[k,l] = nu_k^l * x[k,0], and
    the inputs satisfy x[k,0] = c_k * f_{k+1}(x[k+1,0]) / nu_k^(eta_k+1).
    Chaining around the cycle gives a strictly decreasing scalar map whose
    root is bracketed by doubling and then bisected.
    """
    signs = np.prod([p.c for p in params.populations])
    if signs > 0:
        raise PositiveFeedbackError(
            "positive feedback: uniqueness not guaranteed (prod c_k > 0)"
        )

    pops = params.populations
    n = params.n

    def composed(y: float) -> float:
        # x[n-1,0] = y determines x[n-2,0], ..., x[0,0], then a new x[n-1,0]
        vals = [0.0] * n
        vals[n - 1] = y
        for k in range(n - 2, -1, -1):
            succ = pops[k + 1]
            vals[k] = pops[k].c * succ.rate(vals[k + 1]) / pops[k].nu ** (pops[k].eta + 1)
        last = pops[n - 1]
        return last.c * pops[0].rate(vals[0]) / last.nu ** (last.eta + 1)

    def gap(y: float) -> float:
        return y - composed(y)

    b = 1.0
    while gap(-b) > 0 or gap(b) < 0:
        b *= 2.0
        if b > 1e18:
            raise RuntimeError("equilibrium bracket expansion failed")
    lo, hi = -b, b
    while hi - lo > EQUILIBRIUM_TOL:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)

    inputs = [0.0] * n
    inputs[n - 1] = y
    for k in range(n - 2, -1, -1):
        succ = pops[k + 1]
        inputs[k] = pops[k].c * succ.rate(inputs[k + 1]) / pops[k].nu ** (pops[k].eta + 1)
    x_star = np.empty(params.kappa)
    for k, (o, p) in enumerate(zip(params.offsets, pops)):
        for l in range(p.eta + 1):
            x_star[o + l] = inputs[k] * p.nu ** l
    return x_star


def compute_rho(params: CascadeParams, x_star: np.ndarray) -> float:
    """Cyclic gain rho = prod_k c_k * f_k'(x*[k,0]) at the equilibrium."""
    rho = 1.0
    for k, (o, p) in enumerate(zip(params.offsets, params.populations)):
        rho *= p.c * p.rate.derivative(x_star[o])
    return float(rho)


def _char_poly_coeffs(params: CascadeParams, rho: float) -> np.ndarray:
    """Coefficients (ascending) of prod_k (nu_k + lam)^(eta_k+1) - rho."""
    coeffs = np.array([1.0])
    # convolve smallest nu first for a mildly better-conditioned expansion
    for p in sorted(params.populations, key=lambda q: q.nu):
        factor = np.array([p.nu, 1.0])
        for _ in range(p.eta + 1):
            coeffs = np.convolve(coeffs, factor)
    coeffs[0] -= rho
    return coeffs


def characteristic_roots(params: CascadeParams, rho: float) -> np.ndarray:
    """All kappa roots of the characteristic equation, sorted by descending real part.

    Equal-nu networks use the closed-form kappa-th roots of rho shifted by
    -nu; the general case expands the degree-kappa polynomial and takes
    companion-matrix eigenvalues.  Every root is checked against the
    characteristic equation to ROOT_RESIDUAL_TOL.
    """
    kappa = params.kappa
    nu_eq = params.equal_nu
    if nu_eq is not None:
        mag = abs(rho) ** (1.0 / kappa)
        j = np.arange(1, kappa + 1)
        if rho < 0:
            if kappa % 2 == 1:
                roots = -nu_eq - mag * np.exp(2.0 * j * np.pi / kappa * 1j)
            else:
                roots = -nu_eq + mag * np.exp((2.0 * j - 1.0) * np.pi / kappa * 1j)
        else:
            # kappa-th roots of +|rho|
            roots = -nu_eq + mag * np.exp(2.0 * j * np.pi / kappa * 1j)
    else:
        coeffs = _char_poly_coeffs(params, rho)
        roots = np.polynomial.polynomial.polyroots(coeffs)

    residual = np.abs(_char_poly_value(params, roots) - rho)
    scale = max(1.0, abs(rho))
    if np.any(residual > ROOT_RESIDUAL_TOL * scale):
        raise RuntimeError(
            f"characteristic root residual {residual.max():.3e} exceeds tolerance"
        )
    order = np.argsort(-roots.real, kind="stable")
    return roots[order]


def _char_poly_value(params: CascadeParams, lam: np.ndarray) -> np.ndarray:
    val = np.ones_like(lam, dtype=complex)
    for p in params.populations:
        val = val * (p.nu + lam) ** (p.eta + 1)
    return val


@dataclass(frozen=True)
class StabilityReport:
    """Equilibrium, cyclic gain, spectrum, and the oscillation verdicts."""

    equilibrium: np.ndarray
    rho: float
    roots: np.ndarray
    n_unstable: int                    # roots with positive real part
    oscillatory: bool                  # at least two such roots
    unstable2_rhs: Optional[float]     # nu^kappa / cos(pi/kappa)^kappa (equal nu, kappa >= 3)
    unstable2_holds: Optional[bool]
    omega: Optional[float]             # |rho|^(1/kappa) * sin(pi/kappa) (equal nu)
    period: Optional[float]            # 2*pi/omega

    def to_json_dict(self) -> dict:
        return {
            "equilibrium": [float(v) for v in self.equilibrium],
            "rho": self.rho,
            "roots": [[r.real, r.imag] for r in self.roots],
            "max_re": float(self.roots[0].real),
            "n_unstable": self.n_unstable,
            "oscillatory": self.oscillatory,
            "unstable2_rhs": self.unstable2_rhs,
            "unstable2_holds": self.unstable2_holds,
            "omega": self.omega,
            "period": self.period,
        }


def check_oscillation(params: CascadeParams) -> StabilityReport:
    """Full linear-stability workup at the unique equilibrium."""
    x_star = find_equilibrium(params)
    rho = compute_rho(params, x_star)
    roots = characteristic_roots(params, rho)
    n_unstable = int(np.sum(roots.real > 0))

    rhs = holds = omega = period = None
    nu_eq = params.equal_nu
    if nu_eq is not None and params.kappa >= 3:
        kappa = params.kappa
        rhs = nu_eq ** kappa / math.cos(math.pi / kappa) ** kappa
        holds = abs(rho) > rhs
        omega = abs(rho) ** (1.0 / kappa) * math.sin(math.pi / kappa)
        period = 2.0 * math.pi / omega
    return StabilityReport(
        equilibrium=x_star, rho=rho, roots=roots, n_unstable=n_unstable,
        oscillatory=n_unstable >= 2, unstable2_rhs=rhs, unstable2_holds=holds,
        omega=omega, period=period,
    )


def with_nu(params: CascadeParams, nu: float) -> CascadeParams:
    """Copy of an equal-nu template with every memory rate set to ``nu``."""
    return CascadeParams.make(
        [Population(eta=p.eta, nu=nu, c=p.c, rate=p.rate) for p in params.populations]
    )


def _max_re(params: CascadeParams) -> float:
    report = check_oscillation(params)
    return float(report.roots[0].real)


@dataclass(frozen=True)
class HopfScanResult:
    crossings: tuple
    grid: tuple      # rows (nu, max_re, oscillatory, rho, period-or-None)


def hopf_scan(template: CascadeParams, nu_min: float, nu_max: float,
              step: float) -> HopfScanResult:
    """Locate sign changes of the leading eigenvalue's real part along a nu sweep.

    Each sign change of max Re(lambda) on the grid is refined by bisection to
    |delta nu| < 1e-5.  Returns the refined crossings and the raw grid rows.
    """
    if template.equal_nu is None:
        raise ValueError("hopf_scan requires an equal-nu template")
    if nu_min <= 0 or nu_max <= nu_min or step <= 0:
        raise ValueError("need 0 < nu_min < nu_max and step > 0")

    nus = []
    nu = nu_min
    while nu <= nu_max + 1e-12:
        nus.append(min(nu, nu_max))
        nu += step
    grid = []
    max_res = []
    for nu in nus:
        report = check_oscillation(with_nu(template, nu))
        grid.append((nu, float(report.roots[0].real), report.oscillatory,
                     report.rho, report.period))
        max_res.append(float(report.roots[0].real))

    crossings = []
    for i in range(len(nus) - 1):
        a, b = max_res[i], max_res[i + 1]
        if a == 0.0:
            crossings.append(nus[i])
            continue
        if (a > 0) != (b > 0) and b != 0.0:
            lo, hi = nus[i], nus[i + 1]
            flo = a
            while hi - lo > HOPF_REFINE_TOL:
                mid = 0.5 * (lo + hi)
                fmid = _max_re(with_nu(template, mid))
                if (fmid > 0) == (flo > 0):
                    lo, flo = mid, fmid
                else:
                    hi = mid
            crossings.append(0.5 * (lo + hi))
    return HopfScanResult(crossings=tuple(crossings), grid=tuple(grid))


@dataclass(frozen=True)
class KappaVerdict:
    kappa: int
    rho: float
    rhs: float
    fulfilled: bool          # |rho| > rhs
    n_unstable: int
    max_re: float
    x_inputs: tuple          # equilibrium inputs (x*[k,0]) per population


def kappa_scan(template: CascadeParams, kappas: Sequence[int]) -> list:
    """Re-run the equal-nu stability condition across memory orders.

    The template must be the symmetric two-population setup (eta_1 = eta_2);
    each kappa = 2*(1+eta) re-derives the equilibrium (it moves when nu != 1),
    the cyclic gain, and the oscillation threshold.
    """
    if template.n != 2 or template.equal_nu is None:
        raise ValueError("kappa_scan requires the symmetric equal-nu two-population template")
    out = []
    for kappa in kappas:
        if kappa % 2 != 0 or kappa < 2:
            raise ValueError(f"kappa={kappa}: symmetric template needs even kappa = 2*(1+eta)")
        eta = kappa // 2 - 1
        pops = [Population(eta=eta, nu=p.nu, c=p.c, rate=p.rate)
                for p in template.populations]
        params = CascadeParams.make(pops)
        report = check_oscillation(params)
        out.append(KappaVerdict(
            kappa=kappa, rho=report.rho, rhs=report.unstable2_rhs,
            fulfilled=bool(report.unstable2_holds),
            n_unstable=report.n_unstable,
            max_re=float(report.roots[0].real),
            x_inputs=tuple(float(report.equilibrium[o]) for o in params.offsets),
        ))
    return out


def measure_period(trajectory: LimitTrajectory, component: int = 0,
                   transient_fraction: float = 0.4) -> float:
    """Mean spacing of upward zero crossings of a state component about its post-transient mean.

    Crossing times are linearly interpolated between grid points.  A small
    hysteresis band (5% of the window's half swing) discards the microscopic
    crossings a decaying spiral keeps producing around its endpoint; at
    least five macroscopic crossings are required, otherwise the trajectory
    is declared non-oscillatory.
    """
    cut = int(transient_fraction * len(trajectory.t))
    seg = trajectory.states[cut:, component]
    tseg = trajectory.t[cut:]
    centered = seg - seg.mean()
    band = 0.025 * float(np.ptp(centered))
    times = []
    armed = False
    for i in range(len(centered) - 1):
        if centered[i] <= -band:
            armed = True
        if armed and centered[i] < 0.0 <= centered[i + 1]:
            frac = -centered[i] / (centered[i + 1] - centered[i])
            times.append(tseg[i] + frac * (tseg[i + 1] - tseg[i]))
            armed = False
    if len(times) < 5:
        raise NoOscillationError(
            f"no sustained oscillation detected: {len(times)} upward crossings (< 5)"
        )
    return float((times[-1] - times[0]) / (len(times) - 1))
