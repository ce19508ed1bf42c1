"""Exact finite-N simulation of the interacting network.

Three entry points share one dominating-process construction:

* :func:`simulate_pdmp` -- event-driven simulation of the Markovian cascade
  (Erlang fast path), exact between jumps via the closed-form flow.
* :func:`simulate_hawkes_general` -- history-based validator that recomputes
  every intensity from the raw event log (works for any pointwise-evaluable
  kernels); fed the same seed it reproduces the PDMP path event for event.
* :func:`simulate_coupled` -- one thinning pass in which every candidate is
  tested against both the finite-N intensity and the mean-field intensity,
  counting the discordant decisions for neuron 1 of each population.

The dominating rate is the global bound sum_k N_k * sup f_k.  Candidates are
drawn in fixed blocks of 8192 (gap block, then uniform block) from a single
seeded generator, so any two simulators given the same seed see the same
candidate stream.  A candidate with uniform u is decoded by the stacked
partition of [0,1): population blocks of width N_k*sup_k/Lambda, neuron slots
inside each block, and the within-slot position rescaled to the thinning mark
z in [0, sup_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _fast
from .kernels import ErlangKernel, KernelMatrix
from .limit import CascadeParams, LimitTrajectory
from .rates import rate_pack
from .seeding import make_rng

BLOCK = 8192
_STREAM_LABEL = "thinning"


class UnboundedRateError(ValueError):
    """Raised when a rate function has no finite supremum: thinning needs bounded rates."""


@dataclass(frozen=True)
class PopulationSizes:
    counts: tuple

    def __post_init__(self):
        if len(self.counts) < 1 or any(c < 1 or c != int(c) for c in self.counts):
            raise ValueError("population sizes must be positive integers")

    @classmethod
    def make(cls, counts: Sequence[int]) -> "PopulationSizes":
        return cls(counts=tuple(int(c) for c in counts))

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def fractions(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.total

    def scaled_to(self, total: int) -> "PopulationSizes":
        """Same fractions, new total (rounded; total preserved exactly)."""
        raw = self.fractions * total
        counts = np.maximum(1, np.round(raw).astype(int))
        # fix rounding drift on the largest population
        counts[int(np.argmax(counts))] += total - counts.sum()
        if counts.min() < 1:
            raise ValueError(f"cannot scale {self.counts} to total {total}")
        return PopulationSizes.make(counts)


@dataclass(frozen=True)
class EventLog:
    """Accepted spikes: parallel arrays of times, population and neuron indices (0-based)."""

    times: np.ndarray
    populations: np.ndarray
    neurons: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def count(self, population: int, neuron: Optional[int] = None,
              before: Optional[float] = None) -> int:
        mask = self.populations == population
        if neuron is not None:
            mask &= self.neurons == neuron
        if before is not None:
            mask &= self.times <= before
        return int(np.sum(mask))

    def neuron_counts(self, population: int, size: int) -> np.ndarray:
        """Per-neuron event counts Z_{k,i} for one population."""
        mask = self.populations == population
        return np.bincount(self.neurons[mask], minlength=size)


@dataclass(frozen=True)
class PdmpState:
    """Cascade coordinates, averaged counters, and the clock at one instant."""

    x: np.ndarray
    zbar: np.ndarray
    time: float


@dataclass(frozen=True)
class PdmpTrajectory:
    t: np.ndarray          # (S,)
    states: np.ndarray     # (S, kappa)
    zbar: np.ndarray       # (S, n)


@dataclass(frozen=True)
class CouplingResult:
    """Discordance between the finite-N path and the coupled limit path for neuron 1."""

    horizon: float
    delta: np.ndarray            # (n,) final discordance counts
    discord_times: np.ndarray
    discord_pops: np.ndarray
    grid_dt: float               # limit grid used for the coupled intensity
    grid_len: int

    def delta_at(self, t: float) -> np.ndarray:
        out = np.zeros_like(self.delta)
        for k in range(len(self.delta)):
            out[k] = np.sum((self.discord_pops == k) & (self.discord_times <= t))
        return out


def pdmp_flow(params: CascadeParams, state: np.ndarray, dt: float) -> np.ndarray:
    """Exact inter-jump flow: each population block decays through its memory chain.

    Closed form of the matrix exponential of the bidiagonal block:
    x[k,l](t+dt) = exp(-nu_k dt) * sum_{m=l..eta_k} dt^(m-l)/(m-l)! * x[k,m](t).
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    x = np.asarray(state, dtype=float)
    if x.shape != (params.kappa,):
        raise ValueError(f"state must have length {params.kappa}")
    out = np.empty_like(x)
    for o, p in zip(params.offsets, params.populations):
        decay = math.exp(-p.nu * dt)
        for l in range(p.eta + 1):
            acc = x[o + p.eta]
            for m in range(p.eta - 1, l - 1, -1):
                acc = x[o + m] + acc * dt / (m - l + 1)
            out[o + l] = decay * acc
    return out


def _pack_params(params: CascadeParams, sizes: PopulationSizes):
    n = params.n
    if len(sizes.counts) != n:
        raise ValueError(f"sizes has {len(sizes.counts)} populations, params has {n}")
    nu = np.array([p.nu for p in params.populations])
    cvec = np.array([float(p.c) for p in params.populations])
    eta = np.array([p.eta for p in params.populations], dtype=np.int64)
    off = np.array(params.offsets, dtype=np.int64)
    packs = [rate_pack(p.rate) for p in params.populations]
    rkind = np.array([q[0] for q in packs], dtype=np.int64)
    ra = np.array([q[1] for q in packs])
    rA = np.array([q[2] for q in packs])
    rb = np.array([q[3] for q in packs])
    rx0 = np.array([q[4] for q in packs])
    rB = np.array([q[5] for q in packs])
    sup = np.array([q[6] for q in packs])
    if not np.all(np.isfinite(sup)):
        raise UnboundedRateError("thinning requires bounded rates")
    Nk = np.array(sizes.counts, dtype=np.int64)
    lam_star = float(np.sum(Nk * sup))
    widths = Nk * sup / lam_star if lam_star > 0 else np.zeros(n)
    bbound = np.cumsum(widths)
    slotw = np.where(Nk > 0, widths / Nk, 0.0)
    return (nu, cvec, eta, off, rkind, ra, rA, rb, rx0, rB, sup,
            Nk, lam_star, bbound, slotw)


def _decode_candidate(u: float, bbound: np.ndarray, slotw: np.ndarray,
                      Nk: np.ndarray, lam_star: float):
    """Mirror of the jit kernel's candidate decoding; keep the two in lockstep."""
    n = len(Nk)
    k = 0
    while k < n - 1 and u >= bbound[k]:
        k += 1
    lower = bbound[k - 1] if k > 0 else 0.0
    rel = u - lower
    i = int(rel / slotw[k])
    if i >= Nk[k]:
        i = int(Nk[k] - 1)
    z = (rel - i * slotw[k]) * lam_star
    return k, i, z


def simulate_pdmp(params: CascadeParams, sizes: PopulationSizes, horizon: float,
                  seed: int, sample_dt: Optional[float] = None,
                  limit_traj: Optional[LimitTrajectory] = None,
                  record_intensities: bool = False):
    """Exact thinning simulation of the cascade PDMP.

    Returns ``(EventLog, PdmpTrajectory, PdmpState)``; the trajectory is
    empty unless ``sample_dt`` is set.  When ``limit_traj`` is given the run
    is the shared-randomness coupling and additionally returns a
    :class:`CouplingResult` (see :func:`simulate_coupled`).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    (nu, cvec, eta, off, rkind, ra, rA, rb, rx0, rB, sup,
     Nk, lam_star, bbound, slotw) = _pack_params(params, sizes)
    n, kappa = params.n, params.kappa

    coupled = 0
    lim_dt = 1.0
    lim_x = np.zeros((n, 2))
    if limit_traj is not None:
        if limit_traj.t[-1] < horizon - 1e-9:
            raise ValueError("m-grid shorter than horizon")
        coupled = 1
        lim_dt = limit_traj.dt
        lim_x = np.ascontiguousarray(limit_traj.states[:, list(off)].T)

    if sample_dt is not None:
        samp_t = np.arange(0.0, horizon + sample_dt * 0.5, sample_dt)
    else:
        samp_t = np.empty(0)
    samp_x = np.zeros((len(samp_t), kappa))
    samp_z = np.zeros((len(samp_t), n))

    anchor_x = np.zeros(kappa)
    anchor_t = np.zeros(n)
    zbar = np.zeros(n)

    ev_cap = 4096
    ev_t = np.empty(ev_cap)
    ev_pop = np.empty(ev_cap, dtype=np.int64)
    ev_neu = np.empty(ev_cap, dtype=np.int64)
    n_ev = 0

    disc_cap = 1 << 14
    disc_t = np.empty(disc_cap)
    disc_pop = np.empty(disc_cap, dtype=np.int64)
    n_disc = 0
    delta = np.zeros(n)

    intens = [] if record_intensities else None
    intens_lim = [] if record_intensities else None

    t_now = 0.0
    sp = 0
    rng = make_rng(seed, _STREAM_LABEL)
    done = lam_star <= 0.0

    while not done:
        gaps = rng.standard_exponential(BLOCK) / lam_star
        us = rng.random(BLOCK)
        ci_fin = np.full(BLOCK, np.nan) if record_intensities else np.empty(0)
        ci_lim = np.full(BLOCK, np.nan) if record_intensities else np.empty(0)
        idx = 0
        while True:
            (idx, t_now, n_ev, sp, n_disc, status) = _fast.thinning_block(
                gaps, us, idx, t_now, horizon,
                anchor_x, anchor_t, zbar,
                nu, cvec, eta, off,
                rkind, ra, rA, rb, rx0, rB,
                Nk, lam_star, bbound, slotw,
                ev_t, ev_pop, ev_neu, n_ev,
                samp_t, samp_x, samp_z, sp,
                coupled, lim_dt, lim_x,
                delta, disc_t, disc_pop, n_disc,
                1 if record_intensities else 0, ci_fin, ci_lim,
            )
            if status == _fast.STATUS_EVENTS_FULL:
                ev_cap *= 2
                ev_t = np.concatenate([ev_t, np.empty(ev_cap - len(ev_t))])
                ev_pop = np.concatenate([ev_pop, np.empty(ev_cap - len(ev_pop), dtype=np.int64)])
                ev_neu = np.concatenate([ev_neu, np.empty(ev_cap - len(ev_neu), dtype=np.int64)])
            elif status == _fast.STATUS_DISCORD_FULL:
                disc_cap *= 2
                disc_t = np.concatenate([disc_t, np.empty(disc_cap - len(disc_t))])
                disc_pop = np.concatenate([disc_pop, np.empty(disc_cap - len(disc_pop), dtype=np.int64)])
            elif status == _fast.STATUS_DONE:
                done = True
                break
            else:
                break
        if record_intensities:
            intens.append(ci_fin[:idx])
            intens_lim.append(ci_lim[:idx])

    def flow_from_anchors(target_t: float, out: np.ndarray) -> None:
        for o, p, ta in zip(params.offsets, params.populations, anchor_t):
            dtk = target_t - ta
            decay = math.exp(-p.nu * dtk)
            for l in range(p.eta + 1):
                acc = anchor_x[o + p.eta]
                for m in range(p.eta - 1, l - 1, -1):
                    acc = anchor_x[o + m] + acc * dtk / (m - l + 1)
                out[o + l] = decay * acc

    # flush samples that fall after the last candidate (or all, for a silent system)
    for j in range(sp, len(samp_t)):
        flow_from_anchors(samp_t[j], samp_x[j])
        samp_z[j] = zbar

    final_x = np.empty(kappa)
    flow_from_anchors(horizon, final_x)

    log = EventLog(times=ev_t[:n_ev].copy(), populations=ev_pop[:n_ev].copy(),
                   neurons=ev_neu[:n_ev].copy())
    traj = PdmpTrajectory(t=samp_t, states=samp_x, zbar=samp_z)
    state = PdmpState(x=final_x, zbar=zbar.copy(), time=horizon)
    if limit_traj is None:
        if record_intensities:
            return log, traj, state, np.concatenate(intens) if intens else np.empty(0)
        return log, traj, state
    coupling = CouplingResult(
        horizon=horizon, delta=delta.copy(),
        discord_times=disc_t[:n_disc].copy(), discord_pops=disc_pop[:n_disc].copy(),
        grid_dt=lim_dt, grid_len=lim_x.shape[1],
    )
    if record_intensities:
        return log, traj, state, coupling, np.concatenate(intens) if intens else np.empty(0)
    return log, traj, state, coupling


def simulate_coupled(params: CascadeParams, sizes: PopulationSizes, horizon: float,
                     seed: int, limit_traj: LimitTrajectory) -> CouplingResult:
    """Shared-randomness coupling of the finite-N system with the mean-field limit.

    Every dominating-process candidate (s, z) in a neuron-1 slot is tested
    against both the finite-N intensity f_k(X[k,0](s-)) and the limit
    intensity f_k(x_lim[k,0](s)); the per-population counters record the
    candidates on which exactly one side accepts.
    """
    *_rest, coupling = simulate_pdmp(params, sizes, horizon, seed,
                                     limit_traj=limit_traj)
    return coupling


def _history_input(kernel_like, t: float, ev_times: np.ndarray) -> float:
    """Sum of kernel(t - s) over past event times s."""
    if len(ev_times) == 0:
        return 0.0
    lags = t - ev_times
    if isinstance(kernel_like, ErlangKernel):
        eta = kernel_like.order
        vals = np.exp(-kernel_like.rate * lags)
        if eta > 0:
            vals = vals * lags ** eta / math.factorial(eta)
        return kernel_like.sign * float(np.sum(vals))
    return float(sum(kernel_like(lag) for lag in lags))


def simulate_hawkes_general(kernels: KernelMatrix, rates: Sequence, sizes: PopulationSizes,
                            horizon: float, seed: int,
                            record_intensities: bool = False):
    """History-based thinning for arbitrary kernel wirings.

    Intensities are recomputed from the full event log at every candidate
    (O(events) per evaluation), which makes this the ground-truth validator
    for the Erlang fast path: with Erlang kernels and the same seed it
    consumes the identical candidate stream and must reproduce the PDMP
    event log exactly.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n = kernels.n
    if len(rates) != n or len(sizes.counts) != n:
        raise ValueError("rates/sizes must match the kernel matrix dimension")
    sup = np.array([r.sup() for r in rates])
    if not np.all(np.isfinite(sup)):
        raise UnboundedRateError("thinning requires bounded rates")
    Nk = np.array(sizes.counts, dtype=np.int64)
    lam_star = float(np.sum(Nk * sup))
    widths = Nk * sup / lam_star if lam_star > 0 else np.zeros(n)
    bbound = np.cumsum(widths)
    slotw = np.where(Nk > 0, widths / Nk, 0.0)

    ev_t: list = []
    ev_pop: list = []
    ev_neu: list = []
    by_pop = [[] for _ in range(n)]      # event times per source population
    intens = [] if record_intensities else None

    t_now = 0.0
    rng = make_rng(seed, _STREAM_LABEL)
    done = lam_star <= 0.0
    while not done:
        gaps = rng.standard_exponential(BLOCK) / lam_star
        us = rng.random(BLOCK)
        for idx in range(BLOCK):
            t_next = t_now + gaps[idx]
            if t_next > horizon:
                done = True
                break
            k, i, z = _decode_candidate(us[idx], bbound, slotw, Nk, lam_star)
            total = 0.0
            for l in range(n):
                entry = kernels.entries[k][l]
                if entry is None:
                    continue
                total += _history_input(entry, t_next, np.array(by_pop[l])) / Nk[l]
            lam = float(rates[k](total))
            if record_intensities:
                intens.append(lam)
            if z < lam:
                ev_t.append(t_next)
                ev_pop.append(k)
                ev_neu.append(i)
                by_pop[k].append(t_next)
            t_now = t_next

    log = EventLog(times=np.array(ev_t), populations=np.array(ev_pop, dtype=np.int64),
                   neurons=np.array(ev_neu, dtype=np.int64))
    if record_intensities:
        return log, np.array(intens)
    return log
