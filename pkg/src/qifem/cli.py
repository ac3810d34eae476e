"""Command-line interface: benchmark runs, per-vertex constants reports, and
field interpolation, with whitespace-separated CSV outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import compute_constants, write_constants_report
from .errorlab import benchmark_library, convergence_study, get_case
from .mesh import DOMAINS, Mesh, build_crisscross, read_medit
from .quasinterp import quasi_interpolate, write_field_csv

CASES = ("smooth", "circle", "lshape", "lshape_adapted")


@dataclass
class RunConfig:
    case: str
    degree: int = 1
    levels: int = 4
    quad_exactness: int = 12
    cg_tol: float = 1e-10
    out: str = "."
    grading_const: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.degree < 1 or self.levels < 2 or self.quad_exactness < 1:
            raise ValueError("degree, levels and quadrature exactness must be positive")
        if self.cg_tol <= 0 or self.grading_const <= 0:
            raise ValueError("tolerances and grading constant must be positive")


def load_mesh(source: str) -> Mesh:
    """Builtin ``crisscross:n:domain`` spec or a MEDIT file path."""
    if source.startswith("crisscross:"):
        parts = source.split(":")
        if len(parts) != 3 or parts[2] not in DOMAINS:
            raise ValueError(
                f"builtin mesh spec must be crisscross:<n>:<domain> with domain "
                f"in {DOMAINS}, got {source!r}"
            )
        return build_crisscross(int(parts[1]), parts[2])
    with open(source) as fh:
        return read_medit(fh)


def _write_rows(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(" ".join(f"{x:.12e}" if isinstance(x, float) else str(x) for x in row))
            fh.write("\n")


def cmd_run_benchmark(config: RunConfig) -> int:
    case = get_case(config.case)
    reports, slopes = convergence_study(
        case,
        config.levels,
        config.degree,
        quad_exactness=config.quad_exactness,
        cg_tol=config.cg_tol,
        grading_const=config.grading_const,
    )
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(
        out / "errors_H1.txt",
        "nrdofs LB GB QI LI",
        [[r.n_dofs, r.h1["LB"], r.h1["GB"], r.h1["QI"], r.h1["LI"]] for r in reports],
    )
    _write_rows(
        out / "errors_L2.txt",
        "nrdofs LB GB QI LI",
        [[r.n_dofs, r.l2["LB"], r.l2["GB"], r.l2["QI"], r.l2["LI"]] for r in reports],
    )
    _write_rows(
        out / "ratios.txt",
        "nrdofs eH1 EH1 eL2 EL2",
        [[r.n_dofs, r.h1["QI"], r.eta_h1, r.l2["QI"], r.eta_l2] for r in reports],
    )
    bound_ok = all(
        r.h1["QI"] <= r.eta_h1 + 1e-8 and r.l2["QI"] <= r.eta_l2 + 1e-8
        for r in reports
    )
    summary = {
        "case": config.case,
        "degree": config.degree,
        "levels": config.levels,
        "seed": config.seed,
        "n_dofs": [r.n_dofs for r in reports],
        "slopes": {k: round(v, 12) for k, v in slopes.items()},
        "expected_slopes": {
            "h1": case.expected_h1_slope,
            "l2": case.expected_l2_slope,
        },
        "effectivity_h1": [round(r.eff_h1, 12) for r in reports],
        "effectivity_l2": [round(r.eff_l2, 12) for r in reports],
        "quadrature_consistency_h1": [round(r.h1_consistency, 16) for r in reports],
        "quadrature_consistency_l2": [round(r.l2_consistency, 16) for r in reports],
        "guaranteed_bounds_ok": bound_ok,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not bound_ok:
        print("guaranteed-bound audit FAILED", file=sys.stderr)
        return 1
    return 0


def cmd_constants(mesh_source: str, degree: int, out: str | None) -> int:
    mesh = load_mesh(mesh_source)
    consts = compute_constants(mesh, degree)
    if out is None:
        write_constants_report(mesh, consts, sys.stdout)
    else:
        with open(out, "w") as fh:
            write_constants_report(mesh, consts, fh)
    return 0


def cmd_interpolate(mesh_source: str, degree: int, function: str, out: str | None) -> int:
    mesh = load_mesh(mesh_source)
    if function == "zero":
        from .errorlab import FieldFunction

        field = FieldFunction(
            "zero",
            lambda x: np.zeros(len(x)),
            lambda x: np.zeros_like(x),
        )
    else:
        field = next(
            (c.field for c in benchmark_library() if c.name == function), None
        )
        if field is None:
            raise ValueError(
                f"unknown function {function!r}; choose from "
                f"{[c.name for c in benchmark_library()] + ['zero']}"
            )
    ju = quasi_interpolate(field, mesh, degree)
    if out is None:
        write_field_csv(ju, sys.stdout)
    else:
        with open(out, "w") as fh:
            write_field_csv(ju, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qifem",
        description="Quasi-interpolation benchmarks with certified error constants",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run-benchmark", help="run a convergence benchmark")
    run.add_argument("--case", required=True, choices=CASES)
    run.add_argument("--degree", type=int, default=1)
    run.add_argument("--levels", type=int, default=4)
    run.add_argument("--quad-exactness", type=int, default=12)
    run.add_argument("--cg-tol", type=float, default=1e-10)
    run.add_argument("--out", default=".")
    run.add_argument("--grading-const", type=float, default=1.0)
    run.add_argument("--seed", type=int, default=0)

    con = sub.add_parser("constants", help="per-vertex certified constants")
    con.add_argument("--mesh", required=True, help="crisscross:<n>:<domain> or MEDIT path")
    con.add_argument("--degree", type=int, default=1)
    con.add_argument("--out", default=None)

    itp = sub.add_parser("interpolate", help="quasi-interpolate a builtin function")
    itp.add_argument("--mesh", required=True, help="crisscross:<n>:<domain> or MEDIT path")
    itp.add_argument("--degree", type=int, default=1)
    itp.add_argument("--function", default="smooth")
    itp.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run-benchmark":
            config = RunConfig(
                case=args.case,
                degree=args.degree,
                levels=args.levels,
                quad_exactness=args.quad_exactness,
                cg_tol=args.cg_tol,
                out=args.out,
                grading_const=args.grading_const,
                seed=args.seed,
            )
            return cmd_run_benchmark(config)
        if args.command == "constants":
            return cmd_constants(args.mesh, args.degree, args.out)
        if args.command == "interpolate":
            return cmd_interpolate(args.mesh, args.degree, args.function, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
