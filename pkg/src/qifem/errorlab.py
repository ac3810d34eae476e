"""Benchmark functions, quadrature-based error norms, the guaranteed error
estimators, per-element certified bounds, and the convergence-study driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import basis as bas
from .assembly import ElementBatch
from .constants import CertifiedConstants, aggregate, lambda_a, rho_a
from .mesh import Mesh, VertexPatch, build_crisscross, refine_graded, vertex_patches
from .quasinterp import (
    ConformingField,
    ConformingSpace,
    global_best,
    nodal_interpolant,
    quasi_interpolate_broken,
)
from .reconstruct import BrokenField, PatchOperators, local_best

D_SPACE = 2  # spatial dimension


@dataclass
class FieldFunction:
    """Analytic field with vectorized value/gradient evaluators.

    ``value`` and ``gradient`` map (n, 2) point arrays to (n,) and (n, 2);
    ``hessian`` (optional) maps to (n, 2, 2); ``kink_distance`` (optional)
    gives the distance from each point to the field's non-smooth set, so
    finite-difference consistency checks can avoid it.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    kink_distance: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class BenchmarkCase:
    name: str
    domain: str
    field: FieldFunction
    mesh_family: str  # "uniform" | "graded"
    expected_h1_slope: float
    expected_l2_slope: float
    build_mesh: Callable[[int, float], Mesh] = dc_field(default=None)  # type: ignore


# ---------------------------------------------------------------------------
# error norms


def _as_broken(v) -> BrokenField:
    if isinstance(v, ConformingField):
        return v.to_broken()
    return v


def h1_error_sq_per_element(
    u: FieldFunction, v, batch: ElementBatch, quad_exactness: int = 12
) -> np.ndarray:
    """Per-element squared broken H1 seminorm of u - v."""
    v = _as_broken(v)
    rule = bas.quad_rule(quad_exactness)
    pts = batch.quad_points(rule)
    w = batch.quad_weights(rule)
    gu = np.asarray(u.gradient(pts.reshape(-1, 2))).reshape(pts.shape[0], -1, 2)
    gv = v.grad_bary(rule.points, batch)
    diff = gu - gv
    return np.einsum("tq,tqd,tqd->t", w, diff, diff)


def h1_error(
    u: FieldFunction, v, batch: ElementBatch, quad_exactness: int = 12
) -> float:
    return float(
        np.sqrt(max(h1_error_sq_per_element(u, v, batch, quad_exactness).sum(), 0.0))
    )


def h1_error_sq_pythagoras(
    u: FieldFunction, pi_u: BrokenField, batch: ElementBatch, quad_exactness: int = 12
) -> np.ndarray:
    """Per-element squared error of the elementwise H1 projection, evaluated
    as |grad u|^2 - |grad pi u|^2 with negative round-off clamped to zero."""
    rule = bas.quad_rule(quad_exactness)
    pts = batch.quad_points(rule)
    w = batch.quad_weights(rule)
    gu = np.asarray(u.gradient(pts.reshape(-1, 2))).reshape(pts.shape[0], -1, 2)
    norm_u = np.einsum("tq,tqd,tqd->t", w, gu, gu)
    stiff = batch.stiffness_monomial(pi_u.degree)
    norm_pi = np.einsum("tm,tmn,tn->t", pi_u.coeffs, stiff, pi_u.coeffs)
    return np.maximum(norm_u - norm_pi, 0.0)


def l2_error_sq_per_element(
    u: FieldFunction, v, batch: ElementBatch, quad_exactness: int = 12
) -> np.ndarray:
    v = _as_broken(v)
    rule = bas.quad_rule(quad_exactness)
    pts = batch.quad_points(rule)
    w = batch.quad_weights(rule)
    vu = np.asarray(u.value(pts.reshape(-1, 2))).reshape(pts.shape[0], -1)
    vv = v.eval_bary(rule.points)
    return np.einsum("tq,tq->t", w, (vu - vv) ** 2)


def l2_error(
    u: FieldFunction, v, batch: ElementBatch, quad_exactness: int = 12
) -> float:
    return float(
        np.sqrt(max(l2_error_sq_per_element(u, v, batch, quad_exactness).sum(), 0.0))
    )


def patch_error_sq(
    per_element_sq: np.ndarray, patches: list[VertexPatch]
) -> np.ndarray:
    """Sum per-element squared errors over each vertex patch."""
    return np.array([per_element_sq[p.elements].sum() for p in patches])


# ---------------------------------------------------------------------------
# guaranteed estimators and local bounds


def eta_h1_value(c_omega: float, lb_error: float) -> float:
    """Guaranteed H1 bound: (1 + (d+1)^2 c^2)^{1/2} times the broken
    projection error."""
    return math.sqrt(1.0 + (D_SPACE + 1) ** 2 * c_omega**2) * lb_error


def eta_l2_value(
    c_omega: float, patch_sq: np.ndarray, patch_h: np.ndarray
) -> float:
    """Guaranteed L2 bound built from patchwise projection errors weighted by
    patch diameters."""
    factor = 1.0 / (math.pi * math.sqrt(D_SPACE + 1)) + (
        2.0 / D_SPACE
    ) * math.sqrt(D_SPACE + 1) * c_omega
    return factor * math.sqrt(max((patch_h**2 * patch_sq).sum(), 0.0))


def eta_h1(
    u: FieldFunction,
    mesh: Mesh,
    consts: CertifiedConstants,
    quad_exactness: int = 12,
    pi_u: BrokenField | None = None,
) -> float:
    batch = ElementBatch(mesh)
    if pi_u is None:
        pi_u = local_best(u, mesh, consts.degree)
    per_el = h1_error_sq_pythagoras(u, pi_u, batch, quad_exactness)
    return eta_h1_value(consts.c_omega, math.sqrt(max(per_el.sum(), 0.0)))


def eta_l2(
    u: FieldFunction,
    mesh: Mesh,
    consts: CertifiedConstants,
    quad_exactness: int = 12,
    pi_u: BrokenField | None = None,
) -> float:
    batch = ElementBatch(mesh)
    if pi_u is None:
        pi_u = local_best(u, mesh, consts.degree)
    per_el = h1_error_sq_pythagoras(u, pi_u, batch, quad_exactness)
    patches = vertex_patches(mesh)
    patch_sq = patch_error_sq(per_el, patches)
    patch_h = np.array([p.h for p in patches])
    return eta_l2_value(consts.c_omega, patch_sq, patch_h)


def local_bounds(
    mesh: Mesh,
    consts: CertifiedConstants,
    per_element_sq: np.ndarray,
    patches: list[VertexPatch] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-element certified H1 and L2 bounds from the per-element squared
    projection errors."""
    if patches is None:
        patches = vertex_patches(mesh)
    patch_sq = patch_error_sq(per_element_sq, patches)
    patch_err = np.sqrt(patch_sq)
    patch_h = np.array([p.h for p in patches])
    rl = consts.rho * consts.lam
    from .mesh import element_diameters

    h_el = element_diameters(mesh)
    e_el = np.sqrt(per_element_sq)
    h1_out = np.empty(mesh.n_triangles)
    l2_out = np.empty(mesh.n_triangles)
    for t, tri in enumerate(mesh.triangles):
        s1 = sum(rl[a] * patch_err[a] for a in tri)
        s2 = sum(rl[a] * patch_h[a] * patch_err[a] for a in tri)
        h1_out[t] = math.sqrt(per_element_sq[t] + s1**2)
        l2_out[t] = (h_el[t] / math.pi) * e_el[t] + (2.0 / D_SPACE) * s2
    return h1_out, l2_out


# ---------------------------------------------------------------------------
# benchmark library


def _smooth_field() -> FieldFunction:
    def value(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def gradient(x):
        sx, cx = np.sin(np.pi * x[:, 0]), np.cos(np.pi * x[:, 0])
        sy, cy = np.sin(np.pi * x[:, 1]), np.cos(np.pi * x[:, 1])
        return np.pi * np.column_stack([cx * sy, sx * cy])

    def hessian(x):
        sx, cx = np.sin(np.pi * x[:, 0]), np.cos(np.pi * x[:, 0])
        sy, cy = np.sin(np.pi * x[:, 1]), np.cos(np.pi * x[:, 1])
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = -np.pi**2 * sx * sy
        out[:, 1, 1] = -np.pi**2 * sx * sy
        out[:, 0, 1] = out[:, 1, 0] = np.pi**2 * cx * cy
        return out

    return FieldFunction("smooth", value, gradient, hessian=hessian)


def _circle_field() -> FieldFunction:
    def value(x):
        r = np.linalg.norm(x, axis=1)
        return np.maximum(1.0 - r, 0.0)

    def gradient(x):
        r = np.linalg.norm(x, axis=1)
        out = np.zeros_like(x)
        inside = (r < 1.0) & (r > 0.0)
        out[inside] = -x[inside] / r[inside, None]
        return out

    def kink_distance(x):
        r = np.linalg.norm(x, axis=1)
        return np.minimum(np.abs(1.0 - r), r)

    return FieldFunction("circle", value, gradient, kink_distance=kink_distance)


def _lshape_field() -> FieldFunction:
    # Corner-singularity function r^(2/3) sin(2 theta / 3) in the clockwise
    # angle, multiplied by the radial cutoff (1 - r^2)^2 on r < 1 (zero
    # outside).  The squared cutoff is C^1 across r = 1, so the convergence
    # rates are governed by the re-entrant corner alone.
    alpha = 2.0 / 3.0

    def _polar(x):
        r = np.linalg.norm(x, axis=1)
        # clockwise angle: 0 on the positive x-axis, 3*pi/2 on the positive
        # y-axis
        theta = np.mod(-np.arctan2(x[:, 1], x[:, 0]), 2.0 * np.pi)
        return r, theta

    def value(x):
        r, theta = _polar(x)
        chi = np.maximum(1.0 - r**2, 0.0) ** 2
        with np.errstate(invalid="ignore"):
            g = np.where(r > 0, r**alpha * np.sin(alpha * theta), 0.0)
        return chi * g

    def gradient(x):
        r, theta = _polar(x)
        out = np.zeros_like(x)
        ok = (r > 0.0) & (r < 1.0)
        rr, tt = r[ok], theta[ok]
        xx, yy = x[ok, 0], x[ok, 1]
        s, c = np.sin(alpha * tt), np.cos(alpha * tt)
        g = rr**alpha * s
        # d theta/dx = y/r^2, d theta/dy = -x/r^2 (clockwise angle)
        gx = alpha * rr ** (alpha - 2.0) * (xx * s + yy * c)
        gy = alpha * rr ** (alpha - 2.0) * (yy * s - xx * c)
        chi = (1.0 - rr**2) ** 2
        dchi = -4.0 * (1.0 - rr**2)  # times x, componentwise below
        out[ok, 0] = chi * gx + dchi * xx * g
        out[ok, 1] = chi * gy + dchi * yy * g
        return out

    def kink_distance(x):
        # the gradient is continuous across r = 1; only the origin is
        # singular, plus second-derivative jumps on the unit circle
        r = np.linalg.norm(x, axis=1)
        return np.minimum(np.abs(1.0 - r), r)

    return FieldFunction("lshape", value, gradient, kink_distance=kink_distance)


def _uniform_builder(domain: str, base: int = 4):
    def build(level: int, grading_const: float = 1.0) -> Mesh:
        return build_crisscross(base * 2**level, domain)

    return build


def _graded_builder(domain: str = "lshape", base: int = 4):
    def build(level: int, grading_const: float = 1.0) -> Mesh:
        coarse = build_crisscross(base, domain)
        h_max = 2.0 ** (-(level + 1))
        return refine_graded(coarse, h_max, grading_const=grading_const)

    return build


def benchmark_library() -> list[BenchmarkCase]:
    return [
        BenchmarkCase(
            "smooth", "square2", _smooth_field(), "uniform", -0.5, -1.0,
            _uniform_builder("square2"),
        ),
        BenchmarkCase(
            "circle", "square2", _circle_field(), "uniform", -0.25, -0.75,
            _uniform_builder("square2"),
        ),
        BenchmarkCase(
            "lshape", "lshape", _lshape_field(), "uniform", -1.0 / 3.0, -5.0 / 6.0,
            _uniform_builder("lshape"),
        ),
        BenchmarkCase(
            "lshape_adapted", "lshape", _lshape_field(), "graded", -0.5, -1.0,
            _graded_builder(),
        ),
    ]


def get_case(name: str) -> BenchmarkCase:
    for case in benchmark_library():
        if case.name == name:
            return case
    raise KeyError(f"unknown benchmark case {name!r}")


# ---------------------------------------------------------------------------
# convergence study


APPROXIMANTS = ("LB", "GB", "QI", "LI")


@dataclass
class ErrorReport:
    """Errors, estimators and effectivities for one refinement level."""

    n_dofs: int
    h1: dict[str, float]
    l2: dict[str, float]
    eta_h1: float
    eta_l2: float
    eff_h1: float
    eff_l2: float
    h1_consistency: float = 0.0  # |err(exactness 12) - err(exactness 16)| for QI
    l2_consistency: float = 0.0


def fit_slope(n_dofs, errors, window: int | None = None) -> float:
    """Least-squares slope of log(error) against log(N) over the trailing
    ``window`` points (default: last max(3, len-1))."""
    n_dofs = np.asarray(n_dofs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if window is None:
        window = max(3, len(n_dofs) - 1)
    window = min(window, len(n_dofs))
    x = np.log(n_dofs[-window:])
    y = np.log(np.maximum(errors[-window:], 1e-300))
    return float(np.polyfit(x, y, 1)[0])


def run_level(
    case: BenchmarkCase,
    mesh: Mesh,
    p: int,
    quad_exactness: int = 12,
    cg_tol: float = 1e-10,
    data_exactness: int | None = None,
    compute_consistency: bool = True,
) -> ErrorReport:
    """All approximants, constants, and estimators on one mesh."""
    u = case.field
    batch = ElementBatch(mesh)
    patches = vertex_patches(mesh)
    space = ConformingSpace(mesh, p)

    pi_u = local_best(u, mesh, p, data_exactness)

    # one sweep over patches: quasi-interpolation scatter + constants
    rho = np.empty(mesh.n_vertices)
    lam = np.empty(mesh.n_vertices)
    ju_values = np.zeros(space.n_dofs)
    for patch in patches:
        ops = PatchOperators(mesh, patch, p, batch)
        rho[patch.center] = rho_a(mesh, patch)
        lam[patch.center], _ = lambda_a(ops)
        if ops.conforming.n_dofs:
            s_free = ops.potential(pi_u.coeffs[patch.elements].ravel())
            for key, li in ops.conforming.node_index.items():
                ju_values[space.node_index[key]] += s_free[li]
    consts = aggregate(mesh, rho, lam, p)
    ju = ConformingField(space, ju_values)

    gb = global_best(u, mesh, p, rel_tol=cg_tol, space=space)
    li = nodal_interpolant(u, mesh, p, space=space)

    lb_sq = h1_error_sq_pythagoras(u, pi_u, batch, quad_exactness)
    h1 = {
        "LB": math.sqrt(max(lb_sq.sum(), 0.0)),
        "GB": h1_error(u, gb, batch, quad_exactness),
        "QI": h1_error(u, ju, batch, quad_exactness),
        "LI": h1_error(u, li, batch, quad_exactness),
    }
    l2 = {
        "LB": l2_error(u, pi_u, batch, quad_exactness),
        "GB": l2_error(u, gb, batch, quad_exactness),
        "QI": l2_error(u, ju, batch, quad_exactness),
        "LI": l2_error(u, li, batch, quad_exactness),
    }

    patch_sq = patch_error_sq(lb_sq, patches)
    patch_h = np.array([pt.h for pt in patches])
    e_h1 = eta_h1_value(consts.c_omega, h1["LB"])
    e_l2 = eta_l2_value(consts.c_omega, patch_sq, patch_h)

    h1c = l2c = 0.0
    if compute_consistency:
        h1c = abs(h1["QI"] - h1_error(u, ju, batch, 16))
        l2c = abs(l2["QI"] - l2_error(u, ju, batch, 16))

    return ErrorReport(
        n_dofs=space.n_dofs,
        h1=h1,
        l2=l2,
        eta_h1=e_h1,
        eta_l2=e_l2,
        eff_h1=e_h1 / h1["QI"] if h1["QI"] > 0 else math.inf,
        eff_l2=e_l2 / l2["QI"] if l2["QI"] > 0 else math.inf,
        h1_consistency=h1c,
        l2_consistency=l2c,
    )


def convergence_study(
    case: BenchmarkCase,
    levels: int,
    p: int,
    quad_exactness: int = 12,
    cg_tol: float = 1e-10,
    grading_const: float = 1.0,
    data_exactness: int | None = None,
) -> tuple[list[ErrorReport], dict[str, float]]:
    if levels < 2:
        raise ValueError("need at least two levels for a convergence study")
    reports = []
    for level in range(levels):
        mesh = case.build_mesh(level, grading_const)
        reports.append(
            run_level(
                case,
                mesh,
                p,
                quad_exactness=quad_exactness,
                cg_tol=cg_tol,
                data_exactness=data_exactness,
            )
        )
    n = [r.n_dofs for r in reports]
    slopes = {}
    for key in APPROXIMANTS:
        slopes[f"h1_{key}"] = fit_slope(n, [r.h1[key] for r in reports])
        slopes[f"l2_{key}"] = fit_slope(n, [r.l2[key] for r in reports])
    slopes["h1_eta"] = fit_slope(n, [r.eta_h1 for r in reports])
    slopes["l2_eta"] = fit_slope(n, [r.eta_l2 for r in reports])
    return reports, slopes
