"""Replicate-driven statistical experiments at desk scale.

Each harness is a deterministic function of its parameters and a master
seed: replicate streams are derived by the documented (master, label, index)
rule, cells are independent work items, and every reported statistic carries
its replicate count and a standard error.  The harnesses turn the limit
statements about the network (propagation of chaos, central limit behavior,
weak diffusion error, orbit tube occupancy, memory-order phase transitions)
into finite-sample checks with explicit bands.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as sp_stats

from .diffusion import DiffusionParams, _em_batch, euler_maruyama
from .engine import PopulationSizes, simulate_coupled, simulate_pdmp
from .kernels import classify_criticality
from .limit import (CascadeParams, Population, check_oscillation, integrate,
                    kappa_scan, measure_period, with_nu)
from .seeding import derive_seed


def _replicate_map(fn: Callable[[int], object], replicates: int, threads: int) -> list:
    """Run replicate jobs, possibly on a thread pool; results ordered by index.

    The jit simulation kernels release the GIL, so threads give real
    parallelism; results are merged by replicate index, which keeps every
    statistic independent of scheduling order.
    """
    if threads <= 1:
        return [fn(rep) for rep in range(replicates)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replicates)))


@dataclass
class ExperimentReport:
    """Named grid of cells with per-cell statistics and the seed manifest."""

    name: str
    grid: list
    cells: list
    replicates: int
    master_seed: int
    wall_clock_s: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {
            "name": self.name,
            "grid": self.grid,
            "cells": self.cells,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "extras": self.extras,
        }
        if include_timing:
            out["wall_clock_s"] = self.wall_clock_s
        return out


def _ofit_loglog(ns: np.ndarray, means: np.ndarray):
    """OLS slope/intercept of log(mean) vs log(N) with the slope's standard error."""
    x = np.log(ns)
    y = np.log(means)
    design = np.vstack([x, np.ones_like(x)]).T
    coef, rss, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    dof = len(x) - 2
    resid = y - design @ coef
    sigma2 = float(resid @ resid) / dof if dof > 0 else math.nan
    slope_se = math.sqrt(sigma2 / float(np.sum((x - x.mean()) ** 2))) if dof > 0 else math.nan
    return slope, intercept, slope_se


def chaos_rate_experiment(params: CascadeParams, sizes_base: PopulationSizes,
                          n_totals: Sequence[int], horizon: float, replicates: int,
                          master_seed: int, limit_dt: float = 1e-3,
                          threads: int = 1) -> ExperimentReport:
    """Propagation-of-chaos rate: coupled discrepancy of neuron 1 versus N.

    For each total size N the finite system is coupled to the mean-field
    limit through shared thinning marks, and the replicate-averaged total
    variation of the neuron-1 pair is fitted as log E[Delta] ~ slope*log N.
    The coupling bound predicts slope -1/2.
    """
    t0 = time.perf_counter()
    n_totals = [int(v) for v in n_totals]
    if len(n_totals) < 4:
        raise ValueError("need >= 4 grid points")
    if max(n_totals) < 10 * min(n_totals):
        raise ValueError("N grid must span at least one decade")
    limit = integrate(params, horizon, dt=limit_dt)
    cells = []
    means = []
    for n_tot in n_totals:
        sizes = sizes_base.scaled_to(n_tot)

        def one(rep: int, n_tot=n_tot, sizes=sizes):
            seed = derive_seed(master_seed, f"chaos-N{n_tot}", rep)
            return simulate_coupled(params, sizes, horizon, seed, limit).delta

        deltas = _replicate_map(one, replicates, threads)
        per_pop = np.stack(deltas)
        totals = per_pop.sum(axis=1)
        mean = float(totals.mean())
        cells.append({
            "N": n_tot,
            "sizes": list(sizes.counts),
            "mean_delta": mean,
            "se_delta": float(totals.std(ddof=1) / math.sqrt(replicates)),
            "mean_delta_per_pop": [float(v) for v in per_pop.mean(axis=0)],
            "replicates": replicates,
        })
        means.append(mean)

    means_arr = np.array(means)
    if np.any(means_arr <= 0):
        extras = {"fit": "degenerate", "slope": math.nan, "intercept": math.nan,
                  "slope_se": math.nan}
    else:
        slope, intercept, slope_se = _ofit_loglog(np.array(n_totals, dtype=float), means_arr)
        extras = {"fit": "ok", "slope": slope, "intercept": intercept, "slope_se": slope_se}
    extras["horizon"] = horizon
    return ExperimentReport(
        name="chaos_rate", grid=[{"N": n} for n in n_totals], cells=cells,
        replicates=replicates, master_seed=master_seed,
        wall_clock_s=time.perf_counter() - t0, extras=extras,
    )


def clt_experiment(params: CascadeParams, sizes: PopulationSizes, t: float,
                   replicates: int, master_seed: int,
                   threads: int = 1) -> ExperimentReport:
    """Standardized neuron-1 counts (Z - m_t)/sqrt(m_t) against the normal limit.

    Reports componentwise moments, the cross-population correlation, an
    Anderson-Darling normality statistic, and the first-order ratio
    sqrt(m_t) * E|Z/m_t - 1|.  The branching-criticality verdict of the
    Lipschitz bound is attached rather than assumed.
    """
    t0 = time.perf_counter()
    limit = integrate(params, t)
    m_t = limit.means[-1]
    if np.any(m_t < 10.0):
        raise ValueError(f"t too small for asymptotics: limit means {m_t} (need >= 10)")

    n = params.n

    def one(rep: int):
        seed = derive_seed(master_seed, "clt", rep)
        log, _, _ = simulate_pdmp(params, sizes, t, seed)
        return [(log.count(population=k, neuron=0) - m_t[k]) / math.sqrt(m_t[k])
                for k in range(n)]

    stats_arr = np.array(_replicate_map(one, replicates, threads))

    crit = classify_criticality(params.kernel_matrix(), params.lipschitz_constants())
    cells = []
    for k in range(n):
        col = stats_arr[:, k]
        ad = sp_stats.anderson(col, dist="norm")
        # critical value at the 1% significance level
        ad_crit = float(ad.critical_values[list(ad.significance_level).index(1.0)])
        cells.append({
            "population": k + 1,
            "m_t": float(m_t[k]),
            "mean": float(col.mean()),
            "mean_se": float(col.std(ddof=1) / math.sqrt(replicates)),
            "variance": float(col.var(ddof=1)),
            "variance_se": float(col.var(ddof=1) * math.sqrt(2.0 / (replicates - 1))),
            "anderson_darling": float(ad.statistic),
            "anderson_darling_crit_1pct": ad_crit,
            "normality_ok_1pct": bool(ad.statistic < ad_crit),
            "ratio_first_order": float(math.sqrt(m_t[k]) * np.mean(np.abs(
                (stats_arr[:, k] * math.sqrt(m_t[k]) + m_t[k]) / m_t[k] - 1.0))),
            "replicates": replicates,
        })
    corr = float(np.corrcoef(stats_arr[:, 0], stats_arr[:, 1])[0, 1]) if n >= 2 else math.nan
    constraint = t / sizes.total
    extras = {
        "cross_correlation": corr,
        "cross_correlation_se": 1.0 / math.sqrt(replicates),
        "criticality_class": crit.label,
        "mu1": crit.mu1,
        "alpha0": crit.alpha0,
        "t_over_N": constraint,
        "t": t,
    }
    if crit.alpha0 is not None:
        with np.errstate(over="ignore"):
            extras["supercritical_constraint"] = float(
                np.exp(crit.alpha0 * t) / (t * math.sqrt(sizes.total)))
    return ExperimentReport(
        name="clt", grid=[{"population": k + 1} for k in range(n)], cells=cells,
        replicates=replicates, master_seed=master_seed,
        wall_clock_s=time.perf_counter() - t0, extras=extras,
    )


def default_test_functions(params: CascadeParams,
                           center: Optional[np.ndarray] = None,
                           scale: float = 0.5) -> list:
    """Smooth bounded observables: coordinate tanh compositions.

    Centered on ``center`` (typically the mean-field state at the evaluation
    time) so the tanh operates where the distribution lives instead of on its
    saturated shoulder; one observable per population input plus their
    average.
    """
    offs = params.offsets
    if center is None:
        center = np.zeros(params.kappa)
    fns = []
    for k, o in enumerate(offs):
        fns.append((f"tanh_x{k + 1}_0",
                    lambda x, o=o: np.tanh((x[..., o] - center[o]) / scale)))
    idx = list(offs)
    fns.append(("tanh_mean_inputs",
                lambda x: np.tanh(np.mean(x[..., idx] - center[idx], axis=-1) / scale)))
    return fns


def weak_error_experiment(params: CascadeParams, sizes_base: PopulationSizes,
                          n_totals: Sequence[int], t: float, replicates: int,
                          master_seed: int,
                          test_functions: Optional[list] = None,
                          threads: int = 1) -> ExperimentReport:
    """Expectation gap between the jump system and its diffusion approximation.

    For each N, E[phi(X(t))] and E[phi(Y(t))] are estimated with paired seed
    streams and the gap is reported with a 95% interval.  The per-phi trend
    verdict compares the largest against the smallest N: "decreasing" when
    the intervals separate, "inconclusive" otherwise.
    """
    t0 = time.perf_counter()
    if test_functions is None:
        center = integrate(params, t).states[-1]
        test_functions = default_test_functions(params, center=center)
    n_totals = sorted(int(v) for v in n_totals)
    cells = []
    gap_by_phi: dict = {name: {} for name, _ in test_functions}
    for n_tot in n_totals:
        sizes = sizes_base.scaled_to(n_tot)

        def one(rep: int, n_tot=n_tot, sizes=sizes):
            seed = derive_seed(master_seed, f"weak-pdmp-N{n_tot}", rep)
            return simulate_pdmp(params, sizes, t, seed)[2].x

        x_end = np.stack(_replicate_map(one, replicates, threads))
        dparams = DiffusionParams(cascade=params, sizes=sizes)
        seeds = [derive_seed(master_seed, f"weak-diff-N{n_tot}", rep)
                 for rep in range(replicates)]
        steps = int(round(t / dparams.dt))
        y_end, _ = _em_batch(dparams, steps, seeds, keep_path=False)
        for name, phi in test_functions:
            px = phi(x_end)
            py = phi(y_end)
            gap = float(px.mean() - py.mean())
            se = math.sqrt(px.var(ddof=1) / replicates + py.var(ddof=1) / replicates)
            cell = {
                "N": n_tot, "phi": name, "gap": gap, "abs_gap": abs(gap),
                "se": se, "ci95_half_width": 1.96 * se, "replicates": replicates,
            }
            cells.append(cell)
            gap_by_phi[name][n_tot] = (gap, se)

    verdicts = {}
    n_lo, n_hi = n_totals[0], n_totals[-1]
    for name, _ in test_functions:
        g_lo, s_lo = gap_by_phi[name][n_lo]
        g_hi, s_hi = gap_by_phi[name][n_hi]
        separated = abs(g_lo) - 1.96 * s_lo > abs(g_hi) + 1.96 * s_hi
        verdicts[name] = "decreasing" if separated else "inconclusive"
    extras = {"t": t, "trend": verdicts, "N_low": n_lo, "N_high": n_hi}
    return ExperimentReport(
        name="weak_error", grid=[{"N": n} for n in n_totals], cells=cells,
        replicates=replicates, master_seed=master_seed,
        wall_clock_s=time.perf_counter() - t0, extras=extras,
    )


@dataclass(frozen=True)
class OrbitDiscretization:
    """One period of the post-transient limit orbit on a fine sample grid."""

    points: np.ndarray      # (S, kappa)
    period: float
    diameter: float


def extract_orbit(params: CascadeParams, limit_horizon: float = 250.0,
                  samples: int = 2000) -> OrbitDiscretization:
    """Discretize one measured period of the attractor after a 60% transient cut."""
    traj = integrate(params, limit_horizon)
    period = measure_period(traj, component=0, transient_fraction=0.6)
    t_start = 0.6 * limit_horizon
    times = t_start + np.arange(samples) / samples * period
    pts = np.empty((samples, params.kappa))
    for j in range(params.kappa):
        pts[:, j] = np.interp(times, traj.t, traj.states[:, j])
    # orbit diameter: largest pairwise distance among the samples
    sq = np.sum(pts ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    diameter = float(math.sqrt(max(d2.max(), 0.0)))
    return OrbitDiscretization(points=pts, period=period, diameter=diameter)


def tube_occupancy(params: CascadeParams, sizes: PopulationSizes, horizon: float,
                   epsilon: Optional[float], seed: int,
                   transient_fraction: float = 0.4,
                   stride: int = 10) -> ExperimentReport:
    """Fraction of time the diffusion spends inside an epsilon-tube of the limit orbit.

    Requires an oscillatory configuration.  ``epsilon=None`` selects 10% of
    the orbit diameter.  Also reports the longest uninterrupted in-tube
    stretch, in time units.
    """
    t0 = time.perf_counter()
    report = check_oscillation(params)
    if not report.oscillatory:
        raise ValueError("tube occupancy needs an oscillatory configuration")
    orbit = extract_orbit(params)
    if epsilon is None:
        epsilon = 0.1 * orbit.diameter

    dparams = DiffusionParams(cascade=params, sizes=sizes)
    traj = euler_maruyama(dparams, horizon, seed)
    cut = int(transient_fraction * len(traj.t))
    pts = traj.states[cut::stride]
    times = traj.t[cut::stride]
    dists = np.empty(len(pts))
    orbit_sq = np.sum(orbit.points ** 2, axis=1)
    for i0 in range(0, len(pts), 512):
        blk = pts[i0:i0 + 512]
        d2 = (np.sum(blk ** 2, axis=1)[:, None] + orbit_sq[None, :]
              - 2.0 * blk @ orbit.points.T)
        dists[i0:i0 + len(blk)] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))

    inside = dists < epsilon
    occupancy = float(np.mean(inside))
    longest = 0
    run = 0
    for flag in inside:
        run = run + 1 if flag else 0
        longest = max(longest, run)
    dt_eff = float(times[1] - times[0]) if len(times) > 1 else 0.0
    cells = [{
        "epsilon": float(epsilon),
        "occupancy": occupancy,
        "longest_in_tube_time": longest * dt_eff,
        "orbit_period": orbit.period,
        "orbit_diameter": orbit.diameter,
        "transient_fraction": transient_fraction,
        "n_path_samples": len(pts),
    }]
    return ExperimentReport(
        name="tube_occupancy", grid=[{"epsilon": float(epsilon)}], cells=cells,
        replicates=1, master_seed=seed, wall_clock_s=time.perf_counter() - t0,
        extras={"horizon": horizon, "oscillatory": True},
    )


def classify_amplitude(traj, component: int = 0, transient_fraction: float = 0.3,
                       window_fraction: float = 0.2, threshold: float = 0.5) -> dict:
    """Sustained-vs-damped call on the post-transient trace.

    The startup excursion is discarded first; "early" is the window right
    after the cut and "late" the final window.  Sustained means the late
    peak-to-peak amplitude keeps at least ``threshold`` of the early one.
    """
    n = len(traj.t)
    cut = int(transient_fraction * n)
    w = int(window_fraction * n)
    early = traj.states[cut:cut + w, component]
    late = traj.states[n - w:, component]
    early_ptp = float(np.ptp(early))
    late_ptp = float(np.ptp(late))
    sustained = late_ptp >= threshold * early_ptp
    return {"early_ptp": early_ptp, "late_ptp": late_ptp, "sustained": sustained}


def phase_transition_sweep(template: CascadeParams, kappas: Optional[Sequence[int]] = None,
                           nus: Optional[Sequence[float]] = None,
                           classify_horizon: float = 400.0,
                           master_seed: int = 0) -> ExperimentReport:
    """Cross-tabulate the spectral oscillation verdict against trajectory amplitude decay.

    Exactly one of ``kappas`` (memory-order sweep on the symmetric template)
    or ``nus`` (time-scale sweep) must be given.  Each cell integrates the
    deterministic cascade over ``classify_horizon`` and compares the
    sustained/damped call with the linear-stability verdict.
    """
    t0 = time.perf_counter()
    if (kappas is None) == (nus is None):
        raise ValueError("give exactly one of kappas or nus")
    cells = []
    agreement = True
    if kappas is not None:
        verdicts = kappa_scan(template, kappas)
        nu = template.populations[0].nu
        for v in verdicts:
            eta = v.kappa // 2 - 1
            pops = [Population(eta=eta, nu=p.nu, c=p.c, rate=p.rate)
                    for p in template.populations]
            traj = integrate(CascadeParams.make(pops), classify_horizon)
            cls = classify_amplitude(traj)
            agree = cls["sustained"] == v.fulfilled
            agreement &= agree
            omega = abs(v.rho) ** (1.0 / v.kappa) * math.sin(math.pi / v.kappa)
            cells.append({
                "kappa": v.kappa, "rho": v.rho, "rhs": v.rhs,
                "verdict_oscillatory": v.fulfilled, "max_re": v.max_re,
                "n_unstable": v.n_unstable, "period": 2.0 * math.pi / omega,
                "sustained": cls["sustained"], "early_ptp": cls["early_ptp"],
                "late_ptp": cls["late_ptp"], "agree": agree,
            })
        grid = [{"kappa": k} for k in kappas]
    else:
        for nu in nus:
            params = with_nu(template, nu)
            rep = check_oscillation(params)
            traj = integrate(params, classify_horizon)
            cls = classify_amplitude(traj)
            agree = cls["sustained"] == rep.oscillatory
            agreement &= agree
            cells.append({
                "nu": nu, "rho": rep.rho, "rhs": rep.unstable2_rhs,
                "verdict_oscillatory": rep.oscillatory,
                "max_re": float(rep.roots[0].real),
                "n_unstable": rep.n_unstable,
                "sustained": cls["sustained"], "early_ptp": cls["early_ptp"],
                "late_ptp": cls["late_ptp"], "agree": agree,
            })
        grid = [{"nu": nu} for nu in nus]
    return ExperimentReport(
        name="phase_transition", grid=grid, cells=cells, replicates=1,
        master_seed=master_seed, wall_clock_s=time.perf_counter() - t0,
        extras={"classification_agrees_everywhere": agreement,
                "classify_horizon": classify_horizon},
    )
