#!/usr/bin/env python3
"""Render the four-panel convergence figure from a benchmark output directory.

Panels: (a) H1-seminorm errors of the four approximants against the number of
unknowns, (b) L2 errors, (c) quasi-interpolation errors with their guaranteed
bounds, (d) effectivity ratios.  Dashed reference slopes are chosen per case.

Standalone usage:
    python3 plotkit/render_figures.py --dir out/smooth --case smooth
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class RenderError(RuntimeError):
    pass


APPROXIMANTS = ("LB", "GB", "QI", "LI")

# reference slopes (H1, L2) drawn as dashed guide lines per case
REFERENCE_SLOPES = {
    "smooth": (-0.5, -1.0),
    "circle": (-0.25, -0.75),
    "lshape": (-1.0 / 3.0, -5.0 / 6.0),
    "lshape_adapted": (-0.5, -1.0),
}

AUDIT_TOL = 1e-12


@dataclass
class FigureSpec:
    directory: Path
    case: str
    output: Path
    reference_slopes: tuple[float, float] = field(default=None)  # type: ignore

    def __post_init__(self):
        self.directory = Path(self.directory)
        self.output = Path(self.output)
        if self.reference_slopes is None:
            if self.case not in REFERENCE_SLOPES:
                raise RenderError(
                    f"unknown case {self.case!r}; choose from "
                    f"{sorted(REFERENCE_SLOPES)} or pass reference slopes"
                )
            self.reference_slopes = REFERENCE_SLOPES[self.case]


def read_table(path: Path, expected_header: str) -> dict[str, np.ndarray]:
    if not path.exists():
        raise RenderError(f"missing input file: {path}")
    lines = path.read_text().strip().split("\n")
    if not lines or lines[0].split() != expected_header.split():
        raise RenderError(
            f"{path}: expected header {expected_header!r}, got {lines[0]!r}"
        )
    cols = expected_header.split()
    try:
        data = np.array([[float(tok) for tok in line.split()] for line in lines[1:]])
    except ValueError as exc:
        raise RenderError(f"{path}: malformed numeric row ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(cols) or data.shape[0] == 0:
        raise RenderError(f"{path}: expected {len(cols)} columns and >= 1 row")
    return {name: data[:, i] for i, name in enumerate(cols)}


def load_run(directory: Path) -> tuple[dict, dict, dict]:
    h1 = read_table(directory / "errors_H1.txt", "nrdofs LB GB QI LI")
    l2 = read_table(directory / "errors_L2.txt", "nrdofs LB GB QI LI")
    ratios = read_table(directory / "ratios.txt", "nrdofs eH1 EH1 eL2 EL2")
    audit_ratio_file(h1, l2, ratios)
    return h1, l2, ratios


def audit_ratio_file(h1: dict, l2: dict, ratios: dict) -> None:
    """The error columns of the ratio file must reproduce the QI columns of
    the error files exactly (same writer, same rounding)."""
    for name, errs, key in (("eH1", h1, "QI"), ("eL2", l2, "QI")):
        if ratios[name].shape != errs[key].shape or np.any(
            np.abs(ratios[name] - errs[key]) > AUDIT_TOL * np.maximum(errs[key], 1.0)
        ):
            raise RenderError(
                f"ratio-file audit failed: column {name} deviates from the "
                f"error files beyond {AUDIT_TOL}"
            )


def _guide_line(ax, n, anchor, slope, label):
    ref = anchor * (n / n[0]) ** slope
    ax.loglog(n, ref, "k--", linewidth=0.8, label=label)


def render_four_panel(spec: FigureSpec) -> Path:
    h1, l2, ratios = load_run(spec.directory)
    n = h1["nrdofs"]
    s_h1, s_l2 = spec.reference_slopes

    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    (ax_a, ax_b), (ax_c, ax_d) = axes

    markers = {"LB": "o", "GB": "s", "QI": "^", "LI": "d"}
    for key in APPROXIMANTS:
        ax_a.loglog(n, h1[key], marker=markers[key], label=key)
        ax_b.loglog(l2["nrdofs"], l2[key], marker=markers[key], label=key)
    _guide_line(ax_a, n, 1.2 * h1["QI"][0], s_h1, f"$N^{{{s_h1:.3g}}}$")
    _guide_line(ax_b, n, 1.2 * l2["QI"][0], s_l2, f"$N^{{{s_l2:.3g}}}$")
    ax_a.set_title("(a) $H^1$-seminorm errors")
    ax_b.set_title("(b) $L^2$ errors")

    ax_c.loglog(ratios["nrdofs"], ratios["eH1"], marker="^", label="$H^1$ error")
    ax_c.loglog(ratios["nrdofs"], ratios["EH1"], marker="v", label="$H^1$ bound")
    ax_c.loglog(ratios["nrdofs"], ratios["eL2"], marker="^", label="$L^2$ error")
    ax_c.loglog(ratios["nrdofs"], ratios["EL2"], marker="v", label="$L^2$ bound")
    ax_c.set_title("(c) errors and guaranteed bounds")

    eff_h1 = ratios["EH1"] / ratios["eH1"]
    eff_l2 = ratios["EL2"] / ratios["eL2"]
    ax_d.semilogx(ratios["nrdofs"], eff_h1, marker="o", label="$H^1$ effectivity")
    ax_d.semilogx(ratios["nrdofs"], eff_l2, marker="s", label="$L^2$ effectivity")
    ax_d.set_yscale("log")
    ax_d.set_title("(d) effectivity ratios")

    for ax in (ax_a, ax_b, ax_c, ax_d):
        ax.set_xlabel("number of unknowns $N$")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)

    fig.suptitle(spec.case)
    fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def effectivities(directory: Path) -> tuple[np.ndarray, np.ndarray]:
    """Panel-(d) values, recomputed from the ratio file."""
    _, _, ratios = load_run(Path(directory))
    return ratios["EH1"] / ratios["eH1"], ratios["EL2"] / ratios["eL2"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", required=True, help="benchmark output directory")
    parser.add_argument("--case", required=True, help="case name (picks guide slopes)")
    parser.add_argument("--out", default=None, help="output image path (PNG/SVG)")
    args = parser.parse_args(argv)
    out = args.out or str(Path(args.dir) / f"{args.case}_figure.png")
    try:
        spec = FigureSpec(Path(args.dir), args.case, Path(out))
        path = render_four_panel(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
