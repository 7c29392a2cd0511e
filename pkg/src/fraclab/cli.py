"""Batch command-line entry point.

Each experiment is a subcommand driven by a config file; outputs are
deterministic CSVs (plus rendered figures) in the chosen directory.

Exit codes: 0 full success, 1 validation or usage error, 2 partial results
(some rows flagged non-converged; outputs are retained).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import SUBCOMMANDS, parse_config, validate
from .errors import FraclabError
from .experiments import RUNNERS


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraclab",
        description=("Numerical experiments for the spectral fractional Laplacian "
                     "with mixed Dirichlet-Neumann boundary conditions."))
    parser.add_argument("--version", action="version", version=f"fraclab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    helps = {
        "eigen": "tabulate the mixed-BC eigenbasis and its fractional powers",
        "isometry": "verify the extension-energy identity mode by mode",
        "sobolev": "exact Sobolev constants; optional quotient estimation and sweeps",
        "rates": "L^p scaling laws of truncated instanton traces",
        "fiber": "fibering-map maximizers and threshold margins",
        "solve": "one positive solution by Nehari minimization",
        "multiplicity": "one solution per weight maximum",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, type=Path, help="path to the run config")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: config [output] dir or ./out)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent sub-runs; 0 = auto")
        p.add_argument("--verbose", action="store_true")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; this tool reserves 2 for partial
        # numeric results, so usage problems map to 1
        return 0 if exc.code in (0, None) else 1
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 1

    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1

    try:
        cfg, diags = parse_config(text, args.subcommand)
        diags.extend(validate(cfg))
    except FraclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if diags:
        for d in diags:
            print(f"config error: {d}", file=sys.stderr)
        return 1

    out_dir = args.out or Path(cfg.get("output", "dir", "out"))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 1

    make_plots = cfg.get("output", "plots", True) and not args.no_plots
    if args.verbose:
        print(f"fraclab {__version__}: {args.subcommand} -> {out_dir}", file=sys.stderr)
    try:
        status = RUNNERS[args.subcommand](cfg, out_dir, make_plots, args.threads)
    except FraclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        print(f"done with status {status}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
