"""Command-line entry point: ``rksampling <command> --config FILE [--seed S] [--out DIR]``.

Every command echoes its resolved configuration, prints the key=value
report and writes it with its CSV tables to the output directory.  Exit
codes: 0 success, 1 failed acceptance check, 2 singular Gram matrix,
3 configuration error, 4-8 errors from the kernel, subspace,
density/sampling, stability and reconstruction sections.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .acceptance import SUITES, run_acceptance
from .config import ConfigError, load_config
from .experiment import COMMANDS, SectionError, run_experiment, write_report

__all__ = ["build_parser", "main"]


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rksampling", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="key=value config file (defaults apply when omitted)")
        p.add_argument("--seed", type=_seed, help="override sampling.seed")
        p.add_argument("--out", help="output directory (default: ./out)")
        if name == "reconstruct":
            p.add_argument("--input", help="CSV of sample coordinates and values (overrides reconstruct.input)")
    acc = sub.add_parser("accept", help="run the acceptance suite")
    acc.add_argument("--suite", choices=SUITES, default="fast")
    acc.add_argument("--out", help="directory for one CSV per criterion")
    acc.add_argument("--only", type=int, nargs="+", metavar="ID", help="run only these criteria")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "accept":
        results = run_acceptance(args.suite, args.out, ids=args.only)
        return 0 if all(r.passed for r in results) else 1
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        if args.out:
            cfg = replace(cfg, out=args.out)
        kwargs = {"input_path": args.input} if args.command == "reconstruct" else {}
        report = run_experiment(cfg, args.command, **kwargs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except SectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    sys.stdout.write(report.text())
    write_report(report, cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
