"""Command-line entry point: ``vecoffload run | esm | verify | cdf``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Sequence

from .config import ExperimentConfig, load_config, parse_schemes
from .errors import OffloadError
from .esm import EsmStrides


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--schemes", help="comma-separated scheme names (default: from the config)")
    p.add_argument("--seed", type=int, help="scenario seed")
    p.add_argument("--slots", type=int, help="number of time slots N")
    p.add_argument("--alpha", type=float, help="energy weight")
    p.add_argument("--beta", type=float, help="delay weight")
    p.add_argument("--tasks", type=int, help="number of tasks K")
    p.add_argument("--servers", type=int, help="number of RSUs M")
    p.add_argument("--out", default="results", help="output directory (default: results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecoffload",
                                     description="Vehicle-assisted task offloading simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate the schemes over N slots and write CSVs")
    _common(run)

    esm = sub.add_parser("esm", help="like run, with the exhaustive-search oracle added")
    _common(esm)
    esm.add_argument("--strides", help="rho_step,p_levels,f_levels (default 0.25,4,4)")
    esm.add_argument("--max-k", type=int, help="largest K the search accepts")
    esm.add_argument("--max-m", type=int, help="largest M the search accepts")

    ver = sub.add_parser("verify", help="derivative and solver-oracle checks")
    ver.add_argument("--points", type=int, default=120, help="finite-difference points")
    ver.add_argument("--tolerance", type=float, default=1e-4, help="relative tolerance")
    ver.add_argument("--instances", type=int, default=500, help="solver-oracle instances")
    ver.add_argument("--seed", type=int, default=0)

    cdf = sub.add_parser("cdf", help="utility ratios to the exhaustive search over independent runs")
    _common(cdf)
    cdf.add_argument("--runs", type=int, default=50, help="number of independent instances")
    return parser


def _apply(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    upd = {}
    for flag, key in (("seed", "seed"), ("slots", "N"), ("alpha", "alpha"), ("beta", "beta"),
                      ("tasks", "K"), ("servers", "M")):
        val = getattr(args, flag, None)
        if val is not None:
            upd[key] = val
    cfg = replace(cfg, scenario=cfg.scenario.with_updates(**upd))
    if getattr(args, "schemes", None):
        cfg = replace(cfg, schemes=parse_schemes(args.schemes))
    if getattr(args, "strides", None):
        parts = args.strides.split(",")
        if len(parts) != 3:
            raise ValueError("--strides takes rho_step,p_levels,f_levels")
        strides = EsmStrides(float(parts[0]), int(parts[1]), int(parts[2]))
        cfg = replace(cfg, esm=replace(cfg.esm, strides=strides))
    if getattr(args, "max_k", None) is not None:
        cfg = replace(cfg, esm=replace(cfg.esm, max_k=args.max_k))
    if getattr(args, "max_m", None) is not None:
        cfg = replace(cfg, esm=replace(cfg.esm, max_m=args.max_m))
    return cfg


def _print_summary(summary) -> None:
    print(f"{'scheme':8s} {'utility':>10s} {'energy(J)':>10s} {'delay(s)':>10s} {'s2':>10s}")
    for name, s in summary.schemes.items():
        print(f"{name:8s} {s.mean_utility:10.4f} {s.mean_energy:10.4f} {s.mean_delay:10.4f} "
              f"{s.mean_s2:10.4g}")


def _cmd_run(args, with_esm: bool) -> int:
    from .experiment import run_experiment

    cfg = _apply(load_config(args.config), args)
    schemes = list(cfg.schemes)
    if with_esm and "ESM" not in schemes:
        schemes.append("ESM")
    out = run_experiment(cfg, args.out, schemes)
    _print_summary(out.summary)
    for name, path in out.files.items():
        print(f"wrote {path}")
    return 0


def _cmd_verify(args) -> int:
    from .verification import check_derivatives, check_oracles, sample_points

    deriv = check_derivatives(sample_points(args.points, args.seed), args.tolerance)
    print(f"derivatives: {deriv.n_points} points, tolerance {deriv.tolerance:g}")
    for name, err in sorted(deriv.max_rel_error.items()):
        print(f"  {name:10s} max relative error {err:.3e}")
    for i, name, expected, got in deriv.failures:
        print(f"  FAIL point {i} {name}: expected {expected!r}, got {got!r}")
    oracle = check_oracles(args.instances, args.seed)
    print(f"solver oracles: {oracle.n_instances} instances, tolerance {oracle.tolerance:g}")
    for name, n in oracle.checked.items():
        print(f"  {name:26s} {n:4d} checked, worst shortfall {oracle.worst_gap[name]:.3e}")
    for name, i, expected, got in oracle.failures:
        print(f"  FAIL {name} instance {i}: oracle {expected!r}, got {got!r}")
    ok = deriv.passed and oracle.passed
    print("verify:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_cdf(args) -> int:
    from .experiment import run_cdf

    cfg = _apply(load_config(args.config), args)
    cdf = run_cdf(cfg, args.runs, args.out)
    for name, series in cdf.items():
        print(f"{name:8s} min ratio {series.ratios[0]:.4f} median {series.ratios[len(series.ratios) // 2]:.4f}")
    print(f"wrote {args.out}/cdf.csv")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, with_esm=False)
        if args.command == "esm":
            return _cmd_run(args, with_esm=True)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_cdf(args)
    except (OffloadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
