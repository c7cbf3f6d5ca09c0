"""Command-line surface.

Subcommands:

    run     execute a single-run config
    sweep   execute a sweep, boussinesq-sweep or epsilon-sweep config
    check   execute a lagrangian-check or budget config
    verify  re-verify completed run directories from their artifacts
    report  aggregate runs into a rate table and figures

Exit codes: 0 success, 1 validation error, 2 runtime/blow-up,
3 acceptance-threshold failure.  The default output root is the
SLIPCHANNEL_OUTPUT_ROOT environment variable, then ./runs.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

from .config import ConfigError, parse_config
from .experiments import EXIT_RUNTIME, EXIT_VALIDATION, dispatch
from .spectral import set_fft_workers

_SUBCOMMAND_KINDS = {
    "run": ("single-run",),
    "sweep": ("sweep", "boussinesq-sweep", "epsilon-sweep"),
    "check": ("lagrangian-check", "budget"),
}


def _output_root(args) -> Path:
    if args.output:
        return Path(args.output)
    env = os.environ.get("SLIPCHANNEL_OUTPUT_ROOT")
    if env:
        return Path(env)
    return Path("runs")


def _add_execution_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to a YAML experiment config")
    p.add_argument("--output", help="output root directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--strict", action="store_true",
                   help="treat advisory warnings as errors")
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing run directory")


def _execute(args, subcommand: str) -> int:
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    if cfg.kind not in _SUBCOMMAND_KINDS[subcommand]:
        expected = next(
            name for name, kinds in _SUBCOMMAND_KINDS.items() if cfg.kind in kinds
        )
        print(
            f"config kind '{cfg.kind}' belongs to the '{expected}' subcommand",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    set_fft_workers(max(1, args.threads))

    root = Path(cfg.output) if (cfg.output and not args.output) else _output_root(args)
    try:
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error")
            result = dispatch(cfg, root, force=args.force)
    except FileExistsError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except Warning as exc:
        print(f"strict mode: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    manifest = result.manifest
    print(f"run {manifest.run_id} -> {result.run_dir}")
    for check in manifest.checks:
        status = "pass" if check.passed else "FAIL"
        print(f"  [{status}] {check.name}: {check.value:.6g} {check.op} {check.threshold:.6g}")
    if manifest.error:
        print(f"  error: {manifest.error['kind']}: {manifest.error['message']}")
    return result.exit_code


def _verify(args) -> int:
    from .verify import verify_run

    worst = 0
    for rd in args.run_dirs:
        report = verify_run(rd)
        print("\n".join(report.lines()))
        if not report.artifacts_ok:
            worst = max(worst, 2)
        elif not report.ok:
            worst = max(worst, 3)
    return worst


def _report(args) -> int:
    from .reporting import generate_report

    out = Path(args.output) if args.output else _output_root(args) / "report"
    try:
        written = generate_report(args.run_dirs, out)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slipchannel",
        description="Pseudospectral slip-channel laboratory for "
                    "vanishing-viscosity experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, kinds in _SUBCOMMAND_KINDS.items():
        p = sub.add_parser(name, help=f"execute a config of kind {', '.join(kinds)}")
        _add_execution_flags(p)

    pv = sub.add_parser("verify", help="re-verify completed run directories")
    pv.add_argument("run_dirs", nargs="+", help="run directories to verify")

    pr = sub.add_parser("report", help="aggregate runs into a rate table and figures")
    pr.add_argument("run_dirs", nargs="+", help="run directories to aggregate")
    pr.add_argument("--output", help="report output directory")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in _SUBCOMMAND_KINDS:
        return _execute(args, args.command)
    if args.command == "verify":
        return _verify(args)
    return _report(args)


if __name__ == "__main__":
    sys.exit(main())
