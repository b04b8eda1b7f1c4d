"""Command-line front end.

Commands: simulate, stationary, jacobian, sweep, sensitivity, global,
plot.  Each run writes its outputs plus a manifest sufficient to
reproduce it (a manifest file can be passed back as --config).

Exit codes: 0 success, 2 config error, 3 positivity abort,
4 solver abort, 5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ResolvedConfig,
    config_hash,
    load_config,
    resolve,
    write_json_atomic,
)
from .integrate import TRAJECTORY_COLUMNS, detect_convergence, integrate
from .macro import STATE_NAMES, MacroParams
from .stability import (
    eigenanalysis,
    parameter_sensitivity,
    randomized_global_study,
    reduced_jacobian,
    sweep,
)
from .stationary import StationaryError, solve_stationary, verify_stationary
from .svgplot import line_chart

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POSITIVITY = 3
EXIT_SOLVER = 4
EXIT_INTERNAL = 5

_STOP_EXIT = {
    "completed": EXIT_OK,
    "converged": EXIT_OK,
    "positivity_abort": EXIT_POSITIVITY,
    "solver_abort": EXIT_SOLVER,
}


def _manifest(cfg: ResolvedConfig, command: str, wall: float, stop: str,
              outputs: list[str]) -> dict:
    return {
        "command": command,
        "tool_version": __version__,
        "config_hash": config_hash(cfg),
        "resolved_config": cfg.canonical_dict(),
        "seed": cfg.seed,
        "wall_clock_seconds": wall,
        "stop_reason": stop,
        "outputs": outputs,
    }


def _resolve_from_args(args) -> ResolvedConfig:
    raw = load_config(args.config) if args.config else {}
    return resolve(raw, preset=args.preset, seed=args.seed)


def _fixed_point(cfg: ResolvedConfig):
    traj = integrate(cfg.params, cfg.schedule, cfg.initial_state, cfg.run)
    if traj.stop_reason.kind not in ("completed", "converged"):
        raise StationaryError(f"run did not settle: {traj.stop_reason}")
    return solve_stationary(cfg.params, traj.final_state), traj


def cmd_simulate(args) -> int:
    cfg = _resolve_from_args(args)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    traj = integrate(cfg.params, cfg.schedule, cfg.initial_state, cfg.run)
    csv_path = os.path.join(out_dir, "trajectory.csv")
    tmp = csv_path + ".tmp"
    traj.to_csv(tmp)
    os.replace(tmp, csv_path)
    manifest = _manifest(cfg, "simulate", time.perf_counter() - start,
                         str(traj.stop_reason), [csv_path])
    write_json_atomic(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"simulate: {traj.stop_reason} -> {csv_path}")
    return _STOP_EXIT.get(traj.stop_reason.kind, EXIT_INTERNAL)


def cmd_stationary(args) -> int:
    cfg = _resolve_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    start = time.perf_counter()
    fp, traj = _fixed_point(cfg)
    report = verify_stationary(fp, cfg.params)
    payload = {
        "state": fp.state.to_dict(),
        "lambdas": fp.lambdas_by_name(),
        "residual_norm": fp.residual_norm,
        "newton_iterations": fp.iterations,
        "converged_at": detect_convergence(traj, fp.state, cfg.run.convergence_tol),
        "verification": report.to_dict(),
        "verification_passed": report.passed,
    }
    out_path = os.path.join(args.out, "stationary.json")
    write_json_atomic(out_path, payload)
    manifest = _manifest(cfg, "stationary", time.perf_counter() - start,
                         "verified" if report.passed else "identities failed", [out_path])
    write_json_atomic(os.path.join(args.out, "manifest.json"), manifest)
    print(f"stationary: residual {fp.residual_norm:.2e}, "
          f"verification {'passed' if report.passed else 'FAILED'} -> {out_path}")
    return EXIT_OK if report.passed else EXIT_SOLVER


def cmd_jacobian(args) -> int:
    cfg = _resolve_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    start = time.perf_counter()
    fp, _ = _fixed_point(cfg)
    jac = reduced_jacobian(cfg.params, fp.state)
    rep = eigenanalysis(jac)
    jac_path = os.path.join(args.out, "jacobian.csv")
    tmp = jac_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("variable," + ",".join(STATE_NAMES) + "\n")
        for name, row in zip(STATE_NAMES, jac.matrix):
            fh.write(name + "," + ",".join("%.17g" % v for v in row) + "\n")
    os.replace(tmp, jac_path)
    eig_path = os.path.join(args.out, "eigen.json")
    write_json_atomic(eig_path, {
        "eigenvalues": [[float(e.real), float(e.imag)] for e in rep.eigenvalues],
        "spectral_radius": rep.spectral_radius,
        "near_zero_count": rep.near_zero_count,
        "split_pair_angle": rep.split_angle,
        "max_real_nonzero": rep.max_real_nonzero,
        "locally_stable": rep.locally_stable,
    })
    manifest = _manifest(cfg, "jacobian", time.perf_counter() - start,
                         f"near_zero={rep.near_zero_count}", [jac_path, eig_path])
    write_json_atomic(os.path.join(args.out, "manifest.json"), manifest)
    print(f"jacobian: near-zero eigenvalues {rep.near_zero_count}, "
          f"max Re (nonzero) {rep.max_real_nonzero:.5f} -> {eig_path}")
    return EXIT_OK


def _sweep_grid(cfg: ResolvedConfig) -> list[tuple[float, float]]:
    sw = cfg.sweep
    if "mu_p_scales" in sw or "mu_q_scales" in sw:
        ps = [float(v) for v in sw.get("mu_p_scales", [1.0])]
        qs = [float(v) for v in sw.get("mu_q_scales", [1.0])]
    else:
        n = int(sw.get("points_per_axis", 21))
        lo = float(sw.get("scale_min", 0.01))
        hi = float(sw.get("scale_max", 100.0))
        ps = qs = list(np.logspace(np.log10(lo), np.log10(hi), n))
    return [(mp, mq) for mp in ps for mq in qs]


def cmd_sweep(args) -> int:
    cfg = _resolve_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    start = time.perf_counter()
    grid = _sweep_grid(cfg)
    horizon = float(cfg.sweep.get("horizon", 100.0))
    include_rate = bool(cfg.sweep.get("include_rate_speed", True))
    cells = sweep(grid, cfg.params, parallelism=args.parallelism,
                  horizon=horizon, include_rate_speed=include_rate)
    out_path = os.path.join(args.out, "sweep.csv")
    tmp = out_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("mu_p,mu_q,class,max_re_eig,time_to_converge_or_distance,note\n")
        for c in cells:
            fh.write(f"{c.mu_p_scale:.17g},{c.mu_q_scale:.17g},{c.label},"
                     f"{c.max_re_eig:.17g},{c.metric():.17g},\"{c.note}\"\n")
    os.replace(tmp, out_path)
    counts: dict[str, int] = {}
    for c in cells:
        counts[c.label] = counts.get(c.label, 0) + 1
    manifest = _manifest(cfg, "sweep", time.perf_counter() - start, str(counts), [out_path])
    write_json_atomic(os.path.join(args.out, "manifest.json"), manifest)
    print(f"sweep: {counts} -> {out_path}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _resolve_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    start = time.perf_counter()
    names = list(cfg.sensitivity.get("parameters", []))
    if not names:
        raise ConfigError("sensitivity.parameters", "no parameters listed")
    fp, _ = _fixed_point(cfg)
    matrix = parameter_sensitivity(cfg.params, fp.state, names)
    out_path = os.path.join(args.out, "sensitivity.csv")
    tmp = out_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("variable," + ",".join(names) + "\n")
        for name, row in zip(STATE_NAMES, matrix):
            fh.write(name + "," + ",".join("%.17g" % v for v in row) + "\n")
    os.replace(tmp, out_path)
    manifest = _manifest(cfg, "sensitivity", time.perf_counter() - start, "ok", [out_path])
    write_json_atomic(os.path.join(args.out, "manifest.json"), manifest)
    print(f"sensitivity: {len(names)} parameters -> {out_path}")
    return EXIT_OK


def cmd_global(args) -> int:
    cfg = _resolve_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    start = time.perf_counter()
    study = cfg.study
    report = randomized_global_study(
        cfg.params,
        n_runs=int(study.get("n_runs", 20)),
        seed=cfg.seed,
        perturbation_scale=float(study.get("sigma", 0.1)),
        horizon=float(study.get("horizon", 100.0)),
        parallelism=args.parallelism,
    )
    out_path = os.path.join(args.out, "global.json")
    write_json_atomic(out_path, report.to_dict())
    manifest = _manifest(cfg, "global", time.perf_counter() - start,
                         f"{report.n_converged}/{len(report.runs)} converged", [out_path])
    write_json_atomic(os.path.join(args.out, "manifest.json"), manifest)
    print(f"global: {report.n_converged}/{len(report.runs)} converged -> {out_path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    if not args.variables:
        raise ConfigError("variables", "no columns requested")
    with open(args.csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader]
    if header[0] != "time":
        raise ConfigError(args.csv, "first column must be 'time'")
    available = {name: i for i, name in enumerate(header)}
    missing = [v for v in args.variables if v not in available]
    if missing:
        raise ConfigError(
            ",".join(missing),
            "unknown column(s); available: " + ", ".join(header),
        )
    x = [r[0] for r in rows]
    series = {v: [r[available[v]] for r in rows] for v in args.variables}
    svg = line_chart(x, series, x_label="time", y_label="value",
                     title=os.path.basename(args.csv))
    tmp = args.out_svg + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(svg)
    os.replace(tmp, args.out_svg)
    print(f"plot: {len(series)} series -> {args.out_svg}")
    return EXIT_OK


def _add_common(sub):
    sub.add_argument("--config", metavar="PATH", help="JSON config (or a manifest)")
    sub.add_argument("--out", metavar="DIR", default=".", help="output directory")
    sub.add_argument("--preset", choices=("baseline", "austerity", "conspicuous"))
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--parallelism", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcdsim",
        description="Constrained-dynamics simulation of a six-sector macroeconomy",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn, desc in (
        ("simulate", cmd_simulate, "integrate a scenario and export the trajectory"),
        ("stationary", cmd_stationary, "solve and verify the stationary state"),
        ("jacobian", cmd_jacobian, "reduced Jacobian and eigenstructure at the fixed point"),
        ("sweep", cmd_sweep, "price-speed x quantity-speed stability map"),
        ("sensitivity", cmd_sensitivity, "parameter sensitivities at the fixed point"),
        ("global", cmd_global, "randomized initial-condition study"),
    ):
        sub = subs.add_parser(name, help=desc)
        _add_common(sub)
        sub.set_defaults(fn=fn)
    plot = subs.add_parser("plot", help="static SVG line chart from a trajectory CSV")
    plot.add_argument("csv", help="trajectory CSV produced by simulate")
    plot.add_argument("out_svg", help="output SVG path")
    plot.add_argument("variables", nargs="*", help="column names to plot")
    plot.set_defaults(fn=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StationaryError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
