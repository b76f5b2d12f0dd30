"""Run the acceptance suite and write one CSV per criterion.

Usage: python scripts/run_acceptance.py [--suite fast|full] [--out DIR] [--only ID ...]
"""

import argparse
import sys

from rksampling.acceptance import SUITES, run_acceptance


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--suite", choices=SUITES, default="full")
    parser.add_argument("--out", default="acceptance_out")
    parser.add_argument("--only", type=int, nargs="+", metavar="ID")
    args = parser.parse_args(argv)
    results = run_acceptance(args.suite, args.out, ids=args.only)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
