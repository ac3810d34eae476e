#!/usr/bin/env python3
"""Print the per-vertex certified constants for a mesh.

Usage: python3 scripts/constants_report.py [--mesh crisscross:4:square2] [--degree 1]
"""

import argparse
import sys

from qifem.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mesh", default="crisscross:4:square2")
    parser.add_argument("--degree", type=int, default=1)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    argv = ["constants", "--mesh", args.mesh, "--degree", str(args.degree)]
    if args.out:
        argv += ["--out", args.out]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
