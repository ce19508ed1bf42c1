"""Small-noise diffusion approximation of the finite-N cascade.

The jump noise of each population is replaced by a Brownian channel scaled
by sqrt(rate / N): an Euler-Maruyama scheme on

    dY = b(Y) dt + (1/sqrt(N)) sigma(Y) dB

where the drift b is exactly the mean-field vector field and sigma has one
column per driving population, nonzero only in the top coordinate of the
receiving memory block.  The module also carries the linear-growth Lyapunov
diagnostics used to check that the diffusion keeps returning to a compact
set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import PopulationSizes
from .limit import CascadeParams, LimitTrajectory, vector_field
from .seeding import make_rng

# the drift of the diffusion is the mean-field cascade field, same code path
drift_b = vector_field

DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class DiffusionParams:
    """Cascade parameters plus population sizes and the Euler-Maruyama step.

    Two populations is the analyzed case; larger n is accepted as the
    natural extension with one noise column per population.
    """

    cascade: CascadeParams
    sizes: PopulationSizes
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.sizes.counts) != self.cascade.n:
            raise ValueError("sizes and cascade disagree on the population count")


def diffusion_sigma(dparams: DiffusionParams, state: np.ndarray) -> np.ndarray:
    """kappa x n noise matrix: column j drives the block listening to population j.

    Row top(k), column (k+1 mod n) holds c_k * sqrt(f_{k+1}(x[k+1,0]) / p_{k+1});
    every other entry is zero.
    """
    params = dparams.cascade
    x = np.asarray(state, dtype=float)
    if x.shape != (params.kappa,):
        raise ValueError(f"state must have length {params.kappa}")
    n = params.n
    fracs = dparams.sizes.fractions
    sigma = np.zeros((params.kappa, n))
    offs = params.offsets
    for k, p in enumerate(params.populations):
        succ = (k + 1) % n
        rate_val = params.populations[succ].rate(x[offs[succ]])
        sigma[offs[k] + p.eta, succ] = p.c * math.sqrt(rate_val / fracs[succ])
    return sigma


def euler_maruyama(dparams: DiffusionParams, horizon: float, seed: int,
                   initial: Optional[np.ndarray] = None,
                   noise: bool = True) -> LimitTrajectory:
    """Euler-Maruyama path of the small-noise diffusion from the no-activity state.

    Also accumulates the per-population cumulative means (the drift part of
    Zbar), so the returned trajectory is layout-compatible with the limit
    integrator's.  Aborts on a non-finite state.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    params = dparams.cascade
    steps = int(round(horizon / dparams.dt))
    out_t = np.linspace(0.0, steps * dparams.dt, steps + 1)
    paths, means = _em_batch(dparams, steps, [seed], initial=initial, noise=noise)
    return LimitTrajectory(t=out_t, states=paths[0], means=means[0])


def _em_batch(dparams: DiffusionParams, steps: int, seeds: Sequence[int],
              initial: Optional[np.ndarray] = None, noise: bool = True,
              keep_path: bool = True, chunk: int = 1024):
    """Vectorized Euler-Maruyama over replicates; one generator per seed.

    Each replicate draws its Gaussians from its own stream in time chunks,
    which numpy guarantees to equal stepwise draws, so a batch run is
    bitwise identical to running the replicates one at a time.
    """
    params = dparams.cascade
    n, kappa = params.n, params.kappa
    R = len(seeds)
    dt = dparams.dt
    sqdt = math.sqrt(dt)
    inv_sqrt_n = 1.0 / math.sqrt(dparams.sizes.total)
    offs = np.array(params.offsets)
    tops = np.array([o + p.eta for o, p in zip(params.offsets, params.populations)])
    cvec = np.array([float(p.c) for p in params.populations])
    nu_full = np.concatenate([[p.nu] * (p.eta + 1) for p in params.populations])
    fracs = dparams.sizes.fractions
    rates = [p.rate for p in params.populations]

    y = np.zeros((R, kappa))
    if initial is not None:
        y[:] = np.asarray(initial, dtype=float)
    m = np.zeros((R, n))
    if keep_path:
        paths = np.empty((R, steps + 1, kappa))
        means = np.empty((R, steps + 1, n))
        paths[:, 0] = y
        means[:, 0] = m
    rngs = [make_rng(s, "diffusion") for s in seeds]

    succ = (np.arange(n) + 1) % n
    done = 0
    while done < steps:
        todo = min(chunk, steps - done)
        if noise:
            xi = np.stack([rng.standard_normal((todo, n)) for rng in rngs])
        for j in range(todo):
            rate_vals = np.empty((R, n))
            for k in range(n):
                rate_vals[:, k] = rates[k](y[:, offs[k]])
            drift = -nu_full * y
            for k, p in enumerate(params.populations):
                o = offs[k]
                if p.eta > 0:
                    drift[:, o:o + p.eta] += y[:, o + 1:o + p.eta + 1]
                drift[:, o + p.eta] += cvec[k] * rate_vals[:, succ[k]]
            y = y + drift * dt
            if noise:
                amp = cvec * np.sqrt(rate_vals[:, succ] / fracs[succ])
                y[:, tops] += inv_sqrt_n * sqdt * amp * xi[:, j][:, succ]
            m = m + rate_vals * dt
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(
                    f"diffusion step left the finite range at step {done + j + 1}"
                )
            if keep_path:
                paths[:, done + j + 1] = y
                means[:, done + j + 1] = m
        done += todo
    if keep_path:
        return paths, means
    return y, m


@dataclass(frozen=True)
class LyapunovConfig:
    """Coefficients (l+1)/nu_k^l of the smoothed-absolute-value Lyapunov sum."""

    nus: tuple
    etas: tuple

    @classmethod
    def for_params(cls, params: CascadeParams) -> "LyapunovConfig":
        return cls(nus=tuple(p.nu for p in params.populations),
                   etas=tuple(p.eta for p in params.populations))

    @property
    def coefficients(self) -> np.ndarray:
        coeffs = []
        for nu, eta in zip(self.nus, self.etas):
            coeffs.extend((l + 1) / nu ** l for l in range(eta + 1))
        return np.array(coeffs)


def smoothed_abs(x):
    """j(x) = (x^4+3)/4 inside [-1,1], |x| outside: even, C2, j(0)=3/4, j(+-1)=1."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) >= 1.0, np.abs(x), (x ** 4 + 3.0) / 4.0)
    return float(out) if out.ndim == 0 else out


def lyapunov_G(config: LyapunovConfig, state: np.ndarray) -> float:
    """Weighted sum of smoothed absolute coordinate values; grows linearly at infinity."""
    x = np.asarray(state, dtype=float)
    return float(np.sum(config.coefficients * smoothed_abs(x)))


@dataclass(frozen=True)
class LyapunovEstimate:
    c_hat: float
    d_hat: float
    compact_level: float        # 2*d_hat/c_hat
    time_fraction_in_compact: float

    def to_json_dict(self) -> dict:
        return {
            "c_hat": self.c_hat,
            "d_hat": self.d_hat,
            "compact_level": self.compact_level,
            "time_fraction_in_compact": self.time_fraction_in_compact,
        }


def lyapunov_drift_estimate(trajectory: LimitTrajectory,
                            config: LyapunovConfig) -> LyapunovEstimate:
    """Fit dG/dt ~ -c*G + d along a trajectory by least squares.

    The fitted pair is an empirical stand-in for the drift-inequality
    constants; the report also carries the fraction of time the path spends
    in the fitted compact {G <= 2*d/c}.
    """
    if len(trajectory.t) < 100:
        raise ValueError("trajectory too short for the drift regression (< 100 steps)")
    g = np.array([lyapunov_G(config, s) for s in trajectory.states])
    dt = np.diff(trajectory.t)
    dg = np.diff(g) / dt
    gmid = g[:-1]
    design = np.vstack([gmid, np.ones_like(gmid)]).T
    coef, *_ = np.linalg.lstsq(design, dg, rcond=None)
    c_hat = float(-coef[0])
    d_hat = float(coef[1])
    level = 2.0 * d_hat / c_hat if c_hat > 0 else math.inf
    frac = float(np.mean(g <= level))
    return LyapunovEstimate(c_hat=c_hat, d_hat=d_hat, compact_level=level,
                            time_fraction_in_compact=frac)


def sublevel_return_times(trajectory: LimitTrajectory, config: LyapunovConfig,
                          level: float) -> np.ndarray:
    """Durations of excursions above {G <= level}: the return times to the sublevel set."""
    g = np.array([lyapunov_G(config, s) for s in trajectory.states])
    above = g > level
    times = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = trajectory.t[i]
        elif not flag and start is not None:
            times.append(trajectory.t[i] - start)
            start = None
    return np.array(times)
