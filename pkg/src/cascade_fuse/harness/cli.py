"""``cascade-fuse`` command line entry point.

Exit codes: 0 on success, 2 for configuration or input errors, 3 when more
than 1% of Monte Carlo trials were flagged.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .io import (
    load_imu_csv,
    load_uwb_csv,
    read_summary,
    write_run,
    write_table_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN_FAILURE = 3

log = logging.getLogger("cascade_fuse")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cascade-fuse",
        description="Monte Carlo evaluation of cascaded state estimators.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def sim(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="JSON config file")
        s.add_argument("--trials", type=int, help="number of Monte Carlo trials")
        s.add_argument("--seed", type=int, help="master seed")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
        return s

    sim("simulate-linear", "run the two-state linear toy problem")
    nl = sim("simulate-nonlinear", "run the rigid-body IMU/UWB scenario")
    nl.add_argument("--duration", type=float, help="trial length in seconds")

    rp = sub.add_parser("replay", help="filter recorded IMU and UWB logs")
    rp.add_argument("--imu", type=Path, required=True)
    rp.add_argument("--uwb", type=Path, required=True)
    rp.add_argument("--ahrs-out", type=Path, required=True, help="CSV for the AHRS attitude")
    rp.add_argument("--config", type=Path, help="JSON config (noise levels, geometry)")
    rp.add_argument("--out", type=Path, help="directory for position/velocity estimates")

    rep = sub.add_parser("report", help="print the summary table of a finished run")
    rep.add_argument("--in", dest="in_dir", type=Path, required=True)
    return p


def _resolve(args, scenario: str) -> RunConfig:
    base = RunConfig(scenario=scenario)
    if scenario == "nonlinear":
        base = replace(base, n_trials=100)
    cfg = load_config(args.config, base) if args.config else base
    if cfg.scenario != scenario:
        raise ConfigError(f"config scenario {cfg.scenario!r} does not match {args.command}")
    over = {}
    if args.trials is not None:
        over["n_trials"] = args.trials
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if args.out is not None:
        over["out_dir"] = str(args.out)
    if getattr(args, "duration", None) is not None:
        try:
            over["nonlinear"] = replace(cfg.nonlinear, duration=args.duration)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        cfg = replace(cfg, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.out_dir is None:
        raise ConfigError("an output directory is required (--out or out_dir)")
    return cfg


def _simulate(args, scenario: str) -> int:
    from .runner import run_monte_carlo

    cfg = _resolve(args, scenario)
    t0 = time.perf_counter()
    result = run_monte_carlo(cfg)
    out = write_run(result, cfg.out_dir)
    log.info("finished %d trials in %.1f s", cfg.n_trials, time.perf_counter() - t0)
    print(format_report(read_summary(out)))
    if result.failed:
        print(
            f"run failed: {len(result.flagged)} of {result.n_trials} trials flagged",
            file=sys.stderr,
        )
        return EXIT_RUN_FAILURE
    return EXIT_OK


def _replay(args) -> int:
    from .replay import attitude_table, estimate_table, replay

    cfg = load_config(args.config, RunConfig(scenario="replay")) if args.config else RunConfig(scenario="replay")
    imu = load_imu_csv(args.imu)
    uwb = load_uwb_csv(args.uwb)
    if imu.shape[0] < 2:
        raise ConfigError(f"{args.imu}: need at least two IMU samples")
    res = replay(imu, uwb, cfg.nonlinear, cfg.estimators, cfg.spci_weight, cfg.beta)
    write_table_csv(
        args.ahrs_out, ("t", "qx", "qy", "qz", "qw", "sigma_x", "sigma_y", "sigma_z"), attitude_table(res)
    )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        header = ("t", "px", "py", "pz", "vx", "vy", "vz") + tuple(
            "sigma_" + c for c in ("px", "py", "pz", "vx", "vy", "vz")
        )
        for name in res.estimates:
            write_table_csv(args.out / f"{name}.csv", header, estimate_table(res, name))
    print(f"replayed {imu.shape[0]} IMU samples, {uwb.shape[0] - res.dropped_fixes} UWB fixes used")
    return EXIT_OK


def format_report(summary: dict) -> str:
    """Plain-text RMSE / NEES / coverage table of a ``summary.json``."""
    lines = [
        f"scenario {summary['scenario']}: {summary['n_used']} of {summary['n_trials']} trials used, "
        f"{summary['flagged_count']} flagged"
    ]
    groups = sorted({g for r in summary["rmse"].values() for g in r})
    head = f"{'estimator':<14}" + "".join(f"{'rmse ' + g:>16}" for g in groups)
    head += f"{'nees mean':>11}{'in band':>9}{'3sig cov':>10}{'KL med':>10}"
    lines.append(head)
    for name, r in summary["rmse"].items():
        row = f"{name:<14}" + "".join(
            f"{r[g]:>16.4f}" if g in r else f"{'-':>16}" for g in groups
        )
        n = summary["nees"].get(name)
        row += f"{n['mean']:>11.3f}{n['fraction_within']:>9.3f}" if n else f"{'-':>11}{'-':>9}"
        cov = summary["coverage"].get(name)
        row += f"{min(cov.values()):>10.4f}" if cov else f"{'-':>10}"
        kl = summary["kl_median"].get(name)
        row += f"{kl:>10.4f}" if kl is not None else f"{'-':>10}"
        lines.append(row)
    if summary["nees"]:
        bands = ", ".join(
            f"{k} [{v['lower']:.3f}, {v['upper']:.3f}]" for k, v in summary["nees"].items()
        )
        lines.append(f"95% NEES bands (dof-specific): {bands}")
    lines.append("3sig cov is the smallest per-component coverage; KL is against the full filter")
    return "\n".join(lines)


def _report(args) -> int:
    print(format_report(read_summary(args.in_dir)))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "simulate-linear":
            return _simulate(args, "linear")
        if args.command == "simulate-nonlinear":
            return _simulate(args, "nonlinear")
        if args.command == "replay":
            return _replay(args)
        return _report(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
