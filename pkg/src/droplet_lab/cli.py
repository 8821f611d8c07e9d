"""Command line runner: simulate | spectrum | qsd | verify | sweep."""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, ConfigError, load, parse_list
from .geometry import ReducedSystem
from .io import RunManifest, write_csv, write_json, write_plot_script
from .potential import InvalidDeltaError, InvalidPotentialError, check_delta

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="INI configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (env DROPLET_LAB_OUT wins)")
    p.add_argument("--beta", type=str, help="comma separated inverse temperatures")
    p.add_argument("--n-particles", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--paths", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="droplet-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="killed ensembles and survival fits")
    sp = sub.add_parser("spectrum", parents=[common], help="Dirichlet eigenvalues along beta")
    sp.add_argument("--penalized", action="store_true", help="also compare with the penalized operator")
    sub.add_parser("qsd", parents=[common], help="Fleming-Viot QSD estimates")
    sub.add_parser("verify", parents=[common], help="mixture identity, TV bound and time window checks")
    sw = sub.add_parser("sweep", parents=[common], help="run a subcommand once per beta")
    sw.add_argument("--run", choices=["simulate", "spectrum", "qsd"], default="spectrum")
    return parser


def resolve_config(args) -> Config:
    cfg = load(args.config) if args.config else Config()
    cfg = cfg.override("system", n_particles=args.n_particles, dim=args.dim, delta=args.delta)
    beta = parse_list(args.beta) if args.beta else None
    cfg = cfg.override("simulation", beta=beta, dt=args.dt, t_max=args.t_max, n_paths=args.paths, seed=args.seed)
    return cfg.validate()


def output_dir(args) -> Path:
    env = os.environ.get("DROPLET_LAB_OUT")
    return Path(env) if env else Path(args.out)


def _jobs(args) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def _system(cfg: Config):
    spec = cfg.potential_spec()
    s = cfg.system
    check_delta(spec, s.delta)
    return spec, ReducedSystem(spec, s.n_particles, s.dim)


def _spectral_n(cfg: Config):
    return cfg.spectral.n_points or None


def cmd_simulate(cfg: Config, out: Path, jobs: int, manifest: RunManifest) -> int:
    from .sde import InsufficientStatisticsError, SimParams, SurvivalFit, run_killed_ensemble, simulate_killed
    from .sde import survival_curve

    spec, system = _system(cfg)
    sim = cfg.simulation
    surv_rows, fit_rows, traj_rows = [], [], []
    for beta in sim.beta:
        params = SimParams(beta=beta, dt=sim.dt, t_max=sim.t_max, delta=cfg.system.delta, n_paths=sim.n_paths,
                           seed=sim.seed, store_stride=sim.store_stride, allow_large_dt=sim.allow_large_dt)
        ens = run_killed_ensemble(system, params, n_jobs=jobs)
        t, S = survival_curve(ens.exit_times, np.linspace(0.0, sim.t_max, 201))
        surv_rows += [[beta, ti, si] for ti, si in zip(t, S)]
        try:
            fit = SurvivalFit().fit(ens.exit_times, horizon=ens.t_max)
            fit_rows.append([beta, fit.lambda1_, fit.alpha_, fit.window_[0], fit.window_[1], int(fit.censored_),
                             fit.lambda1_upper_, int(np.isfinite(ens.exit_times).sum()), ens.n_paths])
        except InsufficientStatisticsError as exc:
            print(f"beta={beta}: {exc}", file=sys.stderr)
            fit_rows.append([beta, float("nan"), float("nan"), float("nan"), float("nan"), 0, float("nan"),
                             int(np.isfinite(ens.exit_times).sum()), ens.n_paths])
        for p in range(min(sim.n_trajectories, sim.n_paths)):
            tr = simulate_killed(system, params, np.zeros(system.reduced_dim), path_id=p)
            for row in tr.to_rows():
                traj_rows.append([beta, p, *row])
    k = system.reduced_dim
    files = [
        write_csv(out / "survival.csv", ["beta", "t", "survival"], surv_rows),
        write_csv(out / "fit.csv", ["beta", "lambda1_hat", "alpha_hat", "t0", "t1", "censored", "lambda1_upper",
                                    "n_exits", "n_paths"], fit_rows),
        write_csv(out / "trajectories.csv", ["beta", "path", "t", *[f"y{i + 1}" for i in range(k)], "killed"],
                  traj_rows),
        write_plot_script(out / "plot_survival.py", "survival.csv", "t", ["survival"], "survival", logy=True),
    ]
    for f in files:
        manifest.add_output(f)
    return EXIT_OK


def cmd_spectrum(cfg: Config, out: Path, jobs: int, manifest: RunManifest, penalized: bool = False) -> int:
    from .spectral import compare_spectra, dirichlet_spectrum, penalized_spectrum
    from .geometry import valley_depth

    spec, system = _system(cfg)
    s = cfg.system
    d1 = valley_depth(spec, s.n_particles, s.dim, s.delta).value
    rows, pen_rows = [], []
    files = []
    for beta in cfg.simulation.beta:
        res = dirichlet_spectrum(system, beta, s.delta, n_points=_spectral_n(cfg), n_eigs=max(2, cfg.spectral.n_eigs),
                                 discretization=cfg.spectral.discretization)
        rows.append([beta, res.lambda1, res.lambda2, res.d1_rate, float(np.log(res.lambda2) / beta), d1,
                     beta * res.droplet_second_moment()])
        k = system.reduced_dim
        pts = res.points
        files.append(write_csv(out / f"e1_beta{beta:g}.csv", [*[f"y{i + 1}" for i in range(k)], "e1", "q"],
                               np.column_stack([pts, res.e1_grid, res.qsd_density]).tolist()))
        if penalized:
            pen = penalized_spectrum(system, beta, s.delta, n_eigs=2)
            gaps = compare_spectra(res, pen, 2)
            pen_rows.append([beta, res.lambda1, pen.lambda1, gaps[0], res.lambda2, pen.lambda2, gaps[1]])
    files.insert(0, write_csv(out / "spectrum.csv", ["beta", "lambda1", "lambda2", "log_rate1", "log_rate2",
                                                      "d1_reference", "beta_second_moment"], rows))
    files.append(write_plot_script(out / "plot_lambda.py", "spectrum.csv", "beta", ["lambda1", "lambda2"],
                                   "eigenvalues vs beta", logy=True))
    files.append(write_plot_script(out / "plot_rate.py", "spectrum.csv", "beta", ["log_rate1", "log_rate2"],
                                   "exponential rates vs beta"))
    if penalized:
        files.append(write_csv(out / "penalized.csv", ["beta", "lambda1", "lambda1_penalized", "gap1", "lambda2",
                                                       "lambda2_penalized", "gap2"], pen_rows))
    for f in files:
        manifest.add_output(f)
    return EXIT_OK


def cmd_qsd(cfg: Config, out: Path, jobs: int, manifest: RunManifest) -> int:
    from .qsd import StarMeasure, fleming_viot, measure_distances
    from .sde import SimParams
    from .spectral import dirichlet_spectrum

    spec, system = _system(cfg)
    q = cfg.qsd
    rows, hist_rows = [], []
    for beta in cfg.simulation.beta:
        res = dirichlet_spectrum(system, beta, cfg.system.delta, n_points=_spectral_n(cfg))
        burn = q.burn_in or 10.0 / res.lambda2
        params = SimParams(beta=beta, dt=q.dt, t_max=burn + q.horizon, delta=cfg.system.delta, n_paths=q.n_copies,
                           seed=cfg.simulation.seed, allow_large_dt=cfg.simulation.allow_large_dt)
        est = fleming_viot(system, params, q.n_copies, burn, q.horizon, sample_every=q.sample_every)
        resolved = est.n_kills >= 50
        tv = w1 = float("nan")
        if resolved:
            ref = StarMeasure.from_grid(res.points, res.qsd_density, res.grid.cell_volume, res.grid.radius,
                                        spacing=res.grid.h)
            d = measure_distances(est.measure(), ref, bins=q.bins)
            tv = d.tv
            w1 = d.w1 if d.w1 is not None else float(np.mean(d.w1_bracket))
        rows.append([beta, est.killing_rate, res.lambda1, est.n_kills, est.second_moment, beta * est.second_moment,
                     tv, w1, int(resolved), q.bins, burn])
        if system.reduced_dim == 1:
            R = res.grid.radius
            edges = np.linspace(-R, R, q.bins + 1)
            H, _ = np.histogram(est.samples[:, 0], bins=edges, density=True)
            hist_rows += [[beta, 0.5 * (edges[i] + edges[i + 1]), H[i]] for i in range(q.bins)]
    files = [write_csv(out / "qsd.csv", ["beta", "killing_rate", "lambda1_spectral", "n_kills", "second_moment",
                                         "beta_second_moment", "tv_to_spectral", "w1_to_spectral", "resolved",
                                         "bins", "burn_in"], rows)]
    if hist_rows:
        files.append(write_csv(out / "qsd_histogram.csv", ["beta", "y", "density"], hist_rows))
        files.append(write_plot_script(out / "plot_qsd.py", "qsd_histogram.csv", "y", ["density"], "QSD histogram"))
    for f in files:
        manifest.add_output(f)
    return EXIT_OK


def cmd_verify(cfg: Config, out: Path, jobs: int, manifest: RunManifest) -> int:
    from .multiscale import rows_to_table, strictly_decreasing, time_window, tv_log_slope, verify_identity
    from .multiscale import verify_tv_bound
    from .sde import SimParams

    spec, system = _system(cfg)
    v = cfg.verify
    beta = cfg.simulation.beta[0]
    base = dict(beta=beta, delta=cfg.system.delta, seed=cfg.simulation.seed, t_max=1.0)
    ident = verify_identity(system, SimParams(dt=v.identity_dt, n_paths=v.identity_paths, **base),
                            t_list=v.identity_times, m=v.n_modes, n_jobs=jobs)
    tv_rows, mix = verify_tv_bound(system, SimParams(dt=v.tv_dt, n_paths=v.tv_paths, **base), t_list=v.tv_times,
                                   n_jobs=jobs)
    window = time_window(spec, cfg.system.n_particles, cfg.system.dim,
                         SimParams(beta=v.window_beta[0], dt=v.window_dt, t_max=1.0, delta=cfg.system.delta,
                                   n_paths=v.window_paths, seed=cfg.simulation.seed),
                         beta_list=v.window_beta, n_jobs=jobs)
    slope = tv_log_slope(tv_rows)
    measured = [r for r in window if r.tv is not None]
    verdicts = {
        "identity_within_3se": all(r.status != "fail" for r in ident),
        "tv_bound_holds": all(r.passed for r in tv_rows),
        "tv_slope_within_30pct": bool(abs(slope + mix.lambda2) <= 0.3 * mix.lambda2),
        "mixture_is_probability": bool(mix.is_probability(np.asarray(v.tv_times))),
        "window_tv_decreasing": strictly_decreasing([r.tv for r in measured]) if len(measured) > 1 else True,
        "window_one_minus_alpha_decreasing": strictly_decreasing([r.one_minus_alpha for r in window]),
        "window_chain_inequality": all(r.status != "chain_violated" for r in window),
    }
    files = []
    for name, rows in (("identity", ident), ("tv_bound", tv_rows), ("window", window)):
        header, table = rows_to_table(rows)
        files.append(write_csv(out / f"{name}.csv", header, table))
    files.append(write_json(out / "report.json", {
        "beta": beta, "lambda1": mix.lambda1, "lambda2": mix.lambda2, "alpha": mix.alpha,
        "nu_density_ratio_norm": mix.nu_norm, "tv_log_slope": slope, "verdicts": verdicts,
    }))
    files.append(write_plot_script(out / "plot_tv.py", "tv_bound.csv", "t", ["tv", "tv_bound"], "TV decay",
                                   logy=True))
    for f in files:
        manifest.add_output(f)
    manifest.verdicts.update(verdicts)
    return EXIT_OK if all(verdicts.values()) else EXIT_VERIFY_FAILED


def cmd_sweep(cfg: Config, out: Path, jobs: int, manifest: RunManifest, run: str) -> int:
    rows = []
    header = None
    for beta in cfg.simulation.beta:
        sub = cfg.override("simulation", beta=(beta,))
        sub_out = out / f"beta_{beta:g}"
        sub_out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[run](sub, sub_out, jobs, manifest)
        if code != EXIT_OK:
            return code
        fname = {"simulate": "fit.csv", "spectrum": "spectrum.csv", "qsd": "qsd.csv"}[run]
        from .io import read_csv

        h, body = read_csv(sub_out / fname)
        header = h
        rows += body
    f = write_csv(out / "sweep.csv", header, rows)
    manifest.add_output(f)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "qsd": cmd_qsd, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = output_dir(args)
        out.mkdir(parents=True, exist_ok=True)
        jobs = _jobs(args)
        manifest = RunManifest(args.command, cfg.to_ini(), cfg.simulation.seed, __version__, root=str(out))
        t0 = time.perf_counter()
        if args.command == "sweep":
            code = cmd_sweep(cfg, out, jobs, manifest, args.run)
        elif args.command == "spectrum":
            code = cmd_spectrum(cfg, out, jobs, manifest, penalized=args.penalized)
        else:
            code = COMMANDS[args.command](cfg, out, jobs, manifest)
        manifest.timing["seconds"] = round(time.perf_counter() - t0, 3)
        manifest.notes["jobs"] = jobs
        manifest.write()
    except (ConfigError, InvalidDeltaError, InvalidPotentialError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
