"""Command-line surface.

    hawkes-cascade <subcommand> --config cfg.json [--seed N] [--out DIR]
                   [--plots] [--threads N]

Subcommands: limit, stability, scan-nu, scan-kappa, simulate-pdmp,
simulate-diffusion, chaos, clt, weak-error, tube, figures.  All runs are
batch: artifacts land in --out (default ./out) and are listed in a
manifest.json.  Exit codes: 0 success, 2 configuration error, 3 computation
error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import diffusion as diff
from . import experiments as xp
from . import limit as lim
from .config import ConfigError, RunConfig, parse_config
from .engine import simulate_pdmp
from .kernels import classify_criticality
from .reporting import RunManifest, svg_line_chart

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


def _load_config(args) -> RunConfig:
    with open(args.config, "r", encoding="utf-8") as fh:
        text = fh.read()
    cfg = parse_config(text)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.raw["seed"] = args.seed
    return cfg


def _manifest(cfg: RunConfig, args) -> RunManifest:
    import os
    os.makedirs(args.out, exist_ok=True)
    return RunManifest(config_hash=cfg.config_hash(), master_seed=cfg.seed,
                       out_dir=args.out)


def _traj_rows(params, t, states, extra_header=(), extra_cols=None):
    header = ["time"] + params.state_labels() + list(extra_header)
    rows = []
    for i in range(len(t)):
        row = [float(t[i])] + [float(v) for v in states[i]]
        if extra_cols is not None:
            row += [float(v) for v in extra_cols[i]]
        rows.append(row)
    return header, rows


def cmd_limit(cfg: RunConfig, args, manifest: RunManifest) -> None:
    params = cfg.params
    traj = lim.integrate(params, cfg.horizon, dt=cfg.dt)
    header, rows = _traj_rows(params, traj.t, traj.states,
                              [f"m{k + 1}" for k in range(params.n)], traj.means)
    manifest.csv("limit_trajectory.csv", header, rows)
    if args.plots:
        offs = params.offsets
        series = [(f"x{k + 1}_0", traj.t.tolist(), traj.states[:, o].tolist())
                  for k, o in enumerate(offs)]
        path = f"{args.out}/limit_trajectory.svg"
        svg_line_chart(path, series, title="mean-field cascade",
                       x_label="time", y_label="memory input")
        manifest.register(path)


def cmd_stability(cfg: RunConfig, args, manifest: RunManifest) -> None:
    report = lim.check_oscillation(cfg.params)
    crit = classify_criticality(cfg.params.kernel_matrix(),
                                cfg.params.lipschitz_constants())
    payload = report.to_json_dict()
    payload["criticality"] = crit.to_json_dict()
    manifest.json("stability.json", payload)
    print(f"rho={report.rho:.4f} rhs={report.unstable2_rhs} "
          f"oscillatory={report.oscillatory} period={report.period}")


def cmd_scan_nu(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("scan_nu")
    result = lim.hopf_scan(cfg.params, blk.get("min", 0.5), blk.get("max", 1.6),
                           blk.get("step", 0.01))
    rows = [[nu, max_re, osc, rho, period] for nu, max_re, osc, rho, period in result.grid]
    manifest.csv("scan_nu.csv", ["parameter", "max_re", "verdict", "rho", "period"], rows)
    manifest.json("hopf_points.json", {"crossings": list(result.crossings)})
    if args.plots:
        path = f"{args.out}/scan_nu.svg"
        svg_line_chart(path, [("max Re", [r[0] for r in result.grid],
                               [r[1] for r in result.grid])],
                       title="leading eigenvalue vs nu", x_label="nu", y_label="max Re")
        manifest.register(path)
    print(f"hopf crossings: {list(result.crossings)}")


def cmd_scan_kappa(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("scan_kappa")
    kappas = blk.get("kappas", [4, 8, 12, 16, 20, 24])
    report = xp.phase_transition_sweep(cfg.params, kappas=kappas,
                                       classify_horizon=blk.get("classify_horizon", 400.0),
                                       master_seed=cfg.seed)
    rows = [[c["kappa"], c["max_re"], c["verdict_oscillatory"], c["rho"],
             c["period"], c["rhs"], c["sustained"], c["agree"]]
            for c in report.cells]
    manifest.csv("scan_kappa.csv",
                 ["parameter", "max_re", "verdict", "rho", "period",
                  "rhs", "sustained", "agree"],
                 rows)
    manifest.json("scan_kappa.json", report.to_json_dict())
    print(f"fulfilled: {[c['kappa'] for c in report.cells if c['verdict_oscillatory']]} "
          f"agreement: {report.extras['classification_agrees_everywhere']}")


def cmd_simulate_pdmp(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("simulate")
    sample_dt = blk.get("sample_dt", 0.05)
    log, traj, state = simulate_pdmp(cfg.params, cfg.sizes, cfg.horizon, cfg.seed,
                                     sample_dt=sample_dt)
    manifest.csv("events.csv", ["time", "population", "neuron"],
                 [[float(t), int(p) + 1, int(i) + 1]
                  for t, p, i in zip(log.times, log.populations, log.neurons)])
    header, rows = _traj_rows(cfg.params, traj.t, traj.states,
                              [f"zbar{k + 1}" for k in range(cfg.params.n)], traj.zbar)
    manifest.csv("pdmp_trajectory.csv", header, rows)
    if args.plots:
        offs = cfg.params.offsets
        series = [(f"x{k + 1}_0", traj.t.tolist(), traj.states[:, o].tolist())
                  for k, o in enumerate(offs)]
        path = f"{args.out}/pdmp_trajectory.svg"
        svg_line_chart(path, series, title=f"PDMP path (N={cfg.sizes.total})",
                       x_label="time", y_label="memory input")
        manifest.register(path)
    print(f"events={len(log)} final_zbar={state.zbar.tolist()}")


def cmd_simulate_diffusion(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("simulate")
    dparams = diff.DiffusionParams(cascade=cfg.params, sizes=cfg.sizes,
                                   dt=blk.get("em_dt", diff.DEFAULT_DT))
    traj = diff.euler_maruyama(dparams, cfg.horizon, cfg.seed)
    stride = max(1, int(round(blk.get("sample_dt", 0.05) / dparams.dt)))
    # column layout matches the PDMP trajectory CSV (interchangeable downstream)
    header, rows = _traj_rows(cfg.params, traj.t[::stride], traj.states[::stride],
                              [f"zbar{k + 1}" for k in range(cfg.params.n)],
                              traj.means[::stride])
    manifest.csv("diffusion_trajectory.csv", header, rows)
    lcfg = diff.LyapunovConfig.for_params(cfg.params)
    est = diff.lyapunov_drift_estimate(traj, lcfg)
    manifest.json("lyapunov.json", est.to_json_dict())
    if args.plots:
        offs = cfg.params.offsets
        series = [(f"x{k + 1}_0", traj.t[::stride].tolist(),
                   traj.states[::stride, o].tolist()) for k, o in enumerate(offs)]
        path = f"{args.out}/diffusion_trajectory.svg"
        svg_line_chart(path, series, title=f"diffusion path (N={cfg.sizes.total})",
                       x_label="time", y_label="memory input")
        manifest.register(path)
    print(f"lyapunov c_hat={est.c_hat:.4g} d_hat={est.d_hat:.4g}")


def _report_csv(manifest: RunManifest, name: str, report) -> None:
    cells = report.cells
    if not cells:
        return
    header = sorted({k for c in cells for k in c})
    rows = [[c.get(h) for h in header] for c in cells]
    manifest.csv(name, header, rows)


def cmd_chaos(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("chaos")
    report = xp.chaos_rate_experiment(
        cfg.params, cfg.sizes, blk.get("N_list", [20, 40, 80, 160, 320]),
        blk.get("horizon", 30.0), blk.get("replicates", 100), cfg.seed,
        threads=args.threads)
    manifest.json("chaos_report.json", report.to_json_dict())
    _report_csv(manifest, "chaos_cells.csv", report)
    if args.plots:
        ns = [c["N"] for c in report.cells]
        ms = [c["mean_delta"] for c in report.cells]
        path = f"{args.out}/chaos_loglog.svg"
        svg_line_chart(path, [("E[delta]", list(np.log(ns)), list(np.log(ms)))],
                       title="coupling discrepancy vs N (log-log)",
                       x_label="log N", y_label="log E[delta]")
        manifest.register(path)
    print(f"slope={report.extras['slope']:.4f} (+-{report.extras['slope_se']:.4f})")


def cmd_clt(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("clt")
    report = xp.clt_experiment(cfg.params, cfg.sizes, blk.get("t", 30.0),
                               blk.get("replicates", 500), cfg.seed,
                               threads=args.threads)
    manifest.json("clt_report.json", report.to_json_dict())
    _report_csv(manifest, "clt_cells.csv", report)
    means = [c["mean"] for c in report.cells]
    variances = [c["variance"] for c in report.cells]
    print(f"means={means} variances={variances} "
          f"cross_corr={report.extras['cross_correlation']:.4f}")


def cmd_weak_error(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("weak_error")
    report = xp.weak_error_experiment(
        cfg.params, cfg.sizes, blk.get("N_list", [20, 200]), blk.get("t", 1.0),
        blk.get("replicates", 4000), cfg.seed, threads=args.threads)
    manifest.json("weak_error_report.json", report.to_json_dict())
    _report_csv(manifest, "weak_error_cells.csv", report)
    print(f"trend: {report.extras['trend']}")


def cmd_tube(cfg: RunConfig, args, manifest: RunManifest) -> None:
    blk = cfg.block("tube")
    report = xp.tube_occupancy(cfg.params, cfg.sizes, blk.get("horizon", 100.0),
                               blk.get("epsilon"), cfg.seed)
    manifest.json("tube_report.json", report.to_json_dict())
    _report_csv(manifest, "tube_cells.csv", report)
    cell = report.cells[0]
    print(f"occupancy={cell['occupancy']:.4f} epsilon={cell['epsilon']:.4f}")


def cmd_figures(cfg: RunConfig, args, manifest: RunManifest) -> None:
    """End-to-end reproduction of the three simulation-study figures' data."""
    params = cfg.params
    # figure 1: limit system vs finite-N PDMP vs diffusion
    traj = lim.integrate(params, cfg.horizon, dt=cfg.dt)
    header, rows = _traj_rows(params, traj.t, traj.states,
                              [f"m{k + 1}" for k in range(params.n)], traj.means)
    manifest.csv("fig1_limit.csv", header, rows)
    log, ptraj, _ = simulate_pdmp(params, cfg.sizes, cfg.horizon, cfg.seed,
                                  sample_dt=0.05)
    header, rows = _traj_rows(params, ptraj.t, ptraj.states,
                              [f"zbar{k + 1}" for k in range(params.n)], ptraj.zbar)
    manifest.csv("fig1_pdmp.csv", header, rows)
    dparams = diff.DiffusionParams(cascade=params, sizes=cfg.sizes)
    dtraj = diff.euler_maruyama(dparams, cfg.horizon, cfg.seed)
    stride = max(1, int(round(0.05 / dparams.dt)))
    header, rows = _traj_rows(params, dtraj.t[::stride], dtraj.states[::stride],
                              [f"zbar{k + 1}" for k in range(params.n)],
                              dtraj.means[::stride])
    manifest.csv("fig1_diffusion.csv", header, rows)

    blk = cfg.block("figures")

    # figure 2: bundles of diffusion realizations for increasing N
    fig2_sizes = blk.get("fig2_N", [20, 100, 200, 1000])
    fig2_reps = blk.get("fig2_realizations", 20)
    from .diffusion import _em_batch
    from .seeding import derive_seed
    for n_tot in fig2_sizes:
        sizes_n = cfg.sizes.scaled_to(n_tot)
        dp = diff.DiffusionParams(cascade=params, sizes=sizes_n)
        steps = int(round(cfg.horizon / dp.dt))
        seeds = [derive_seed(cfg.seed, f"fig2-N{n_tot}", r) for r in range(fig2_reps)]
        paths, _ = _em_batch(dp, steps, seeds)
        t_grid = np.linspace(0.0, steps * dp.dt, steps + 1)[::stride]
        x1 = paths[:, ::stride, 0]
        header = ["time"] + [f"x1_0_rep{r + 1}" for r in range(fig2_reps)] + ["x1_0_limit"]
        limit_x1 = np.interp(t_grid, traj.t, traj.states[:, 0])
        rows = [[float(t_grid[i])] + [float(v) for v in x1[:, i]] + [float(limit_x1[i])]
                for i in range(len(t_grid))]
        manifest.csv(f"fig2_N{n_tot}.csv", header, rows)

    # figure 3 left: memory-order sweep; right: nu sweep
    sweep = xp.phase_transition_sweep(
        params, kappas=blk.get("kappas", [4, 8, 12, 16, 20, 24]),
        classify_horizon=blk.get("classify_horizon", 400.0), master_seed=cfg.seed)
    manifest.json("fig3_kappa.json", sweep.to_json_dict())
    # the nu sweep runs on the symmetric template (equal memory orders)
    nu_grid = blk.get("scan_nu", {})
    scan_eta = blk.get("scan_eta", 3)
    scan_template = lim.CascadeParams.make([
        lim.Population(eta=scan_eta, nu=p.nu, c=p.c, rate=p.rate)
        for p in params.populations
    ])
    scan = lim.hopf_scan(scan_template, nu_grid.get("min", 0.5),
                         nu_grid.get("max", 1.6), nu_grid.get("step", 0.01))
    manifest.csv("fig3_nu.csv", ["parameter", "max_re", "verdict", "rho", "period"],
                 [[r[0], r[1], r[2], r[3], r[4]] for r in scan.grid])
    manifest.json("fig3_hopf.json", {"crossings": list(scan.crossings)})
    if args.plots:
        offs = params.offsets
        series = [("limit", traj.t.tolist(), traj.states[:, 0].tolist()),
                  ("pdmp", ptraj.t.tolist(), ptraj.states[:, 0].tolist()),
                  ("diffusion", dtraj.t[::stride].tolist(),
                   dtraj.states[::stride, 0].tolist())]
        path = f"{args.out}/fig1_x1.svg"
        svg_line_chart(path, series, title="x1 input: limit vs finite-N",
                       x_label="time", y_label="x1_0")
        manifest.register(path)
        path = f"{args.out}/fig3_nu.svg"
        svg_line_chart(path, [("max Re", [r[0] for r in scan.grid],
                               [r[1] for r in scan.grid])],
                       title="oscillation region", x_label="nu", y_label="max Re")
        manifest.register(path)
    print(f"figures done: hopf={list(scan.crossings)}")


_COMMANDS = {
    "limit": cmd_limit,
    "stability": cmd_stability,
    "scan-nu": cmd_scan_nu,
    "scan-kappa": cmd_scan_kappa,
    "simulate-pdmp": cmd_simulate_pdmp,
    "simulate-diffusion": cmd_simulate_diffusion,
    "chaos": cmd_chaos,
    "clt": cmd_clt,
    "weak-error": cmd_weak_error,
    "tube": cmd_tube,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkes-cascade",
        description="Multi-class nonlinear Hawkes networks with Erlang memory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--plots", action="store_true", help="also emit SVG charts")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for replicate batches")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print(json.dumps({"error": "config", "violations": ["--threads must be >= 1"]}),
              file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        cfg = _load_config(args)
    except FileNotFoundError as exc:
        print(json.dumps({"error": "config", "violations": [str(exc)]}), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(json.dumps({"error": "config", "violations": exc.violations}),
              file=sys.stderr)
        return EXIT_CONFIG
    manifest = _manifest(cfg, args)
    try:
        _COMMANDS[args.command](cfg, args, manifest)
    except Exception as exc:  # computation failure: machine-readable, exit 3
        print(json.dumps({"error": "computation", "type": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_COMPUTE
    manifest.finalize(wall_clock_s=time.perf_counter() - t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
