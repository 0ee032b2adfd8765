"""``fluxchain`` command line: run, verify, list-configs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fluxchain import __version__
from fluxchain.chain import TIER_EJ, tier_ej
from fluxchain.config import TABLE1_CONFIGS, parse_config
from fluxchain.errors import (
    ConfigError,
    FluxchainError,
    NumericalError,
    VerificationError,
)
from fluxchain.optimize import TABLE2_ROWS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4


def _cmd_run(args) -> int:
    from fluxchain.harness import run_experiment

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else cfg.output_dir
    try:
        manifest = run_experiment(cfg, out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FluxchainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    failed = [t for t in manifest.tasks if t["status"] != "ok"]
    print(f"{cfg.kind}: {len(manifest.tasks) - len(failed)}/{len(manifest.tasks)} tasks ok, "
          f"{manifest.wall_time_s:.1f} s, outputs in {out}")
    for t in failed:
        print(f"  {t['task']}: {t['status']}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_NUMERICAL


def _cmd_verify(args) -> int:
    from fluxchain.harness import DEFAULT_REFERENCE, verify_against_reference

    ref = DEFAULT_REFERENCE if args.reference == "default" else Path(args.reference)
    try:
        report = verify_against_reference(args.run_dir, ref)
    except VerificationError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    for line in report.lines():
        print(line)
    n_pass = sum(c.passed for c in report.checks)
    print(f"{n_pass}/{len(report.checks)} checks passed")
    return EXIT_OK if report.passed else EXIT_VERIFY


def _cmd_list(args) -> int:
    print("tiers (E_J in GHz, prime subtracts 0.1):", ", ".join(f"{k}={v}" for k, v in TIER_EJ.items()))
    print("\nfour-qubit chains:")
    for name in TABLE1_CONFIGS:
        print(f"  {name:8s} E_J = {tier_ej(name)}")
    print("\ngate rows (* marks the target):")
    for name in TABLE2_ROWS:
        print(f"  {name:8s} E_J = {tier_ej(name)}")
    print("\n  SLMS'    spectators S (swept) and S' = S - 0.1")
    root = Path(args.config_dir)
    files = sorted(root.glob("*.yaml")) if root.is_dir() else []
    if files:
        print(f"\nconfig files in {root}:")
        for f in files:
            print(f"  {f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluxchain", description="Coupled fluxonium chain experiments")
    parser.add_argument("--version", action="version", version=f"fluxchain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: output_dir from the config)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify", help="check run outputs against pinned reference values")
    ver.add_argument("run_dir")
    ver.add_argument("reference", help="reference YAML, or 'default' for the bundled file")
    ver.set_defaults(func=_cmd_verify)

    lst = sub.add_parser("list-configs", help="list named configurations and config files")
    lst.add_argument("--config-dir", default="configs")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
