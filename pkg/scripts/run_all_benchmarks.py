#!/usr/bin/env python3
"""Run the four benchmark cases (p=1, 4 levels) into out/<case>/.

Usage: python3 scripts/run_all_benchmarks.py [--out out] [--levels 4]
"""

import argparse
import sys

from qifem.cli import CASES, main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out")
    parser.add_argument("--levels", type=int, default=4)
    parser.add_argument("--degree", type=int, default=1)
    args = parser.parse_args()
    status = 0
    for case in CASES:
        print(f"== {case} ==", flush=True)
        code = cli_main(
            [
                "run-benchmark",
                "--case",
                case,
                "--levels",
                str(args.levels),
                "--degree",
                str(args.degree),
                "--out",
                f"{args.out}/{case}",
            ]
        )
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
