"""Reference-simplex polynomial machinery.

Scalar polynomials on a triangle are stored as coefficient vectors over the
homogeneous barycentric monomials of their degree: a polynomial of degree <= q
is written as sum_{a+b+c=q} c_{abc} l1^a l2^b l3^c (homogenization is exact
because the barycentric coordinates sum to one).  This representation is
affine-invariant, so the same coefficient vector describes the polynomial on
the reference triangle and on any physical element, and degree bookkeeping is
exact.

Vector-valued H(div) bases are built per physical element with edge-moment and
interior-moment degrees of freedom; edge moments are taken in a caller-supplied
orientation so that matched degrees of freedom yield normal-trace continuity
without sign tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

MAX_P_DEGREE = 4
MAX_RT_DEGREE = 3
MAX_QUAD_EXACTNESS = 20

# reference triangle (0,0), (1,0), (0,1); barycentric = (1-x-y, x, y)
REF_COORDS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

# local edge i is opposite local vertex i
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


def poly_dim(q: int) -> int:
    return (q + 1) * (q + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(q: int) -> tuple[tuple[int, int, int], ...]:
    """Homogeneous barycentric exponents (a, b, c) with a+b+c = q, lex order."""
    out = []
    for a in range(q, -1, -1):
        for b in range(q - a, -1, -1):
            out.append((a, b, q - a - b))
    return tuple(out)


def eval_monomials(q: int, bary: np.ndarray) -> np.ndarray:
    """Values of the degree-q monomials at barycentric points, shape (n, dim)."""
    bary = np.asarray(bary, dtype=float)
    idx = multi_indices(q)
    out = np.empty((bary.shape[0], len(idx)))
    for j, (a, b, c) in enumerate(idx):
        out[:, j] = bary[:, 0] ** a * bary[:, 1] ** b * bary[:, 2] ** c
    return out


def eval_monomial_bary_partials(q: int, bary: np.ndarray) -> np.ndarray:
    """Partials of the degree-q monomials w.r.t. the three barycentric
    coordinates, shape (n, dim, 3)."""
    bary = np.asarray(bary, dtype=float)
    idx = multi_indices(q)
    out = np.zeros((bary.shape[0], len(idx), 3))
    for j, (a, b, c) in enumerate(idx):
        if a:
            out[:, j, 0] = a * bary[:, 0] ** (a - 1) * bary[:, 1] ** b * bary[:, 2] ** c
        if b:
            out[:, j, 1] = b * bary[:, 0] ** a * bary[:, 1] ** (b - 1) * bary[:, 2] ** c
        if c:
            out[:, j, 2] = c * bary[:, 0] ** a * bary[:, 1] ** b * bary[:, 2] ** (c - 1)
    return out


@lru_cache(maxsize=None)
def monomial_integral_factors(q: int) -> np.ndarray:
    """Integral of each degree-q monomial over a triangle, per unit area.

    int_K l1^a l2^b l3^c = 2|K| a! b! c! / (a+b+c+2)!.
    """
    idx = multi_indices(q)
    fac = np.array(
        [
            2.0 * math.factorial(a) * math.factorial(b) * math.factorial(c)
            / math.factorial(a + b + c + 2)
            for (a, b, c) in idx
        ]
    )
    return fac


@lru_cache(maxsize=None)
def degree_raise_matrix(q: int, v: int) -> np.ndarray:
    """Matrix mapping degree-q coefficients to degree-(q+1) coefficients of the
    product with the barycentric coordinate ``v`` (0, 1 or 2)."""
    src = multi_indices(q)
    dst = {m: i for i, m in enumerate(multi_indices(q + 1))}
    out = np.zeros((len(dst), len(src)))
    for j, m in enumerate(src):
        mm = list(m)
        mm[v] += 1
        out[dst[tuple(mm)], j] = 1.0
    return out


@lru_cache(maxsize=None)
def homogenize_matrix(q: int) -> np.ndarray:
    """Matrix embedding degree-q coefficients into the degree-(q+1) monomial
    basis (multiplication by l1 + l2 + l3 = 1)."""
    return (
        degree_raise_matrix(q, 0) + degree_raise_matrix(q, 1) + degree_raise_matrix(q, 2)
    )


@lru_cache(maxsize=None)
def lattice_nodes(q: int) -> np.ndarray:
    """Principal lattice nodes in barycentric coordinates, shape (dim, 3).

    Node i corresponds to multi-index i: node = multi_index / q.
    """
    idx = np.array(multi_indices(q), dtype=float)
    return idx / q


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class LagrangeBasisP:
    """Nodal Lagrange basis of degree q on the principal lattice.

    ``nodal_to_monomial`` column k holds the monomial coefficients of the k-th
    nodal basis function.
    """

    degree: int
    nodes: np.ndarray
    vandermonde: np.ndarray
    nodal_to_monomial: np.ndarray

    def eval(self, bary: np.ndarray) -> np.ndarray:
        """Values of all nodal basis functions, shape (n, dim)."""
        return eval_monomials(self.degree, bary) @ self.nodal_to_monomial


@lru_cache(maxsize=None)
def p_basis(q: int) -> LagrangeBasisP:
    if not 1 <= q <= MAX_P_DEGREE:
        raise UnsupportedDegreeError(f"Lagrange degree {q} not in 1..{MAX_P_DEGREE}")
    nodes = lattice_nodes(q)
    vand = eval_monomials(q, nodes)
    inv = np.linalg.inv(vand)
    basis = LagrangeBasisP(q, nodes, vand, inv)
    # Kronecker property
    err = np.abs(basis.eval(nodes) - np.eye(poly_dim(q))).max()
    if err > 1e-12:
        raise AssertionError(f"nodal basis fails Kronecker check: {err:.2e}")
    return basis


@lru_cache(maxsize=None)
def lagrange_reduce_matrix(p: int) -> np.ndarray:
    """Matrix taking degree-(p+1) coefficients to the degree-p coefficients of
    the polynomial that matches them at the degree-p principal lattice nodes."""
    basis = p_basis(p)
    vals = eval_monomials(p + 1, basis.nodes)  # (dim_p, dim_{p+1})
    return basis.nodal_to_monomial @ vals


def lagrange_reduce(coeffs: np.ndarray, p: int) -> np.ndarray:
    """Degree-reducing nodal interpolation of a degree-(p+1) polynomial.

    ``coeffs`` is a coefficient vector (or a stack of them, last axis = dim)
    over the degree-(p+1) monomials; the result is the degree-p polynomial
    agreeing with it at all degree-p lattice nodes.  Idempotent on degree-p
    inputs embedded via :func:`homogenize_matrix`.
    """
    return np.asarray(coeffs) @ lagrange_reduce_matrix(p).T


# ---------------------------------------------------------------------------
# quadrature


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle in barycentric coordinates.

    Weights sum to 1/2 (the reference area); multiply by 2|K| to integrate
    over a physical element.
    """

    exactness: int
    points: np.ndarray
    weights: np.ndarray

    def physical_points(self, coords: np.ndarray) -> np.ndarray:
        """Map the rule's points onto a triangle given by (3, 2) coordinates."""
        return self.points @ coords


def _verify_rule(exactness: int, points: np.ndarray, weights: np.ndarray) -> None:
    for q in range(exactness + 1):
        vals = eval_monomials(q, points)
        approx = weights @ vals
        exact = 0.5 * monomial_integral_factors(q)
        rel = np.abs(approx - exact) / np.maximum(np.abs(exact), 1e-300)
        if rel.max() > 1e-13:
            raise AssertionError(
                f"quadrature rule (exactness {exactness}) misses degree {q}: "
                f"rel err {rel.max():.2e}"
            )


@lru_cache(maxsize=None)
def quad_rule(exactness: int) -> QuadratureRule:
    """Rule integrating all polynomials up to ``exactness`` exactly."""
    if exactness > MAX_QUAD_EXACTNESS or exactness < 0:
        raise QuadratureError(f"exactness {exactness} not in 0..{MAX_QUAD_EXACTNESS}")
    if exactness <= 1:
        points = np.array([[1 / 3, 1 / 3, 1 / 3]])
        weights = np.array([0.5])
    elif exactness == 2:
        points = np.array(
            [[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]
        )
        weights = np.full(3, 1 / 6)
    else:
        # collapsed-square (Duffy) tensor Gauss rule; positive weights
        n = (exactness + 3) // 2
        g, w = leggauss(n)
        u = 0.5 * (g + 1.0)
        wu = 0.5 * w
        uu, vv = np.meshgrid(u, u, indexing="ij")
        wuu, wvv = np.meshgrid(wu, wu, indexing="ij")
        x = uu.ravel()
        y = (vv * (1.0 - uu)).ravel()
        weights = (wuu * wvv * (1.0 - uu)).ravel()
        points = np.column_stack([1.0 - x - y, x, y])
    _verify_rule(exactness, points, weights)
    return QuadratureRule(exactness, points, weights)


# ---------------------------------------------------------------------------
# affine element geometry helpers


def triangle_area(coords: np.ndarray) -> float:
    v1 = coords[1] - coords[0]
    v2 = coords[2] - coords[0]
    return 0.5 * (v1[0] * v2[1] - v1[1] * v2[0])


def barycentric_gradients(coords: np.ndarray) -> np.ndarray:
    """Constant gradients of the three barycentric coordinates, shape (3, 2)."""
    area2 = 2.0 * triangle_area(coords)
    if area2 <= 0:
        raise ValueError("degenerate or negatively oriented triangle")
    grads = np.empty((3, 2))
    for i in range(3):
        j, k = LOCAL_EDGES[i]
        e = coords[k] - coords[j]
        # rotate opposite edge by +90 deg and normalize so grad . (a_i - a_j) = 1
        grads[i] = np.array([-e[1], e[0]]) / area2
    return grads


def push_forward_gradients(q: int, bary: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Physical gradients of the degree-q monomials on the given triangle,
    shape (n, dim, 2)."""
    partials = eval_monomial_bary_partials(q, bary)
    grads = barycentric_gradients(coords)
    return np.einsum("nmk,kd->nmd", partials, grads)


# ---------------------------------------------------------------------------
# Raviart-Thomas elements


def _scalar_monomial_pairs(p: int) -> list[tuple[int, int]]:
    return [(i, j) for k in range(p + 1) for i in range(k, -1, -1) for j in [k - i]]


def _eval_2d_monomials(pairs, xi, eta):
    vals = np.empty((xi.shape[0], len(pairs)))
    for c, (i, j) in enumerate(pairs):
        vals[:, c] = xi**i * eta**j
    return vals


def _eval_2d_monomial_partials(pairs, xi, eta):
    dx = np.zeros((xi.shape[0], len(pairs)))
    dy = np.zeros((xi.shape[0], len(pairs)))
    for c, (i, j) in enumerate(pairs):
        if i:
            dx[:, c] = i * xi ** (i - 1) * eta**j
        if j:
            dy[:, c] = j * xi**i * eta ** (j - 1)
    return dx, dy


class RTBasis:
    """H(div)-conforming basis of degree p on one physical triangle.

    Degrees of freedom: for each local edge, moments of the normal trace
    against Legendre polynomials of degree 0..p in an orientation fixed by
    ``edge_flip`` (the same orientation must be used on both elements sharing
    an edge); for p >= 1, interior moments of both components against the
    scalar monomials of degree <= p-1.

    Generators: (m, 0), (0, m) for scalar monomials m of degree <= p in the
    centered/scaled local frame, plus the radial generators ((x-c)/h) m for m
    homogeneous of degree p.
    """

    def __init__(self, p: int, coords: np.ndarray, edge_flip=(False, False, False)):
        if not 1 <= p <= MAX_RT_DEGREE:
            raise UnsupportedDegreeError(f"RT degree {p} not in 1..{MAX_RT_DEGREE}")
        coords = np.asarray(coords, dtype=float)
        area = triangle_area(coords)
        if area <= 0:
            raise ValueError("degenerate or negatively oriented triangle")
        self.degree = p
        self.coords = coords
        self.center = coords.mean(axis=0)
        self.scale = max(np.linalg.norm(coords[i] - coords[j]) for i, j in LOCAL_EDGES)
        self.edge_flip = tuple(edge_flip)
        self.pairs = _scalar_monomial_pairs(p)
        self.rad_pairs = [(i, p - i) for i in range(p, -1, -1)]
        ns = len(self.pairs)
        self.dim = 2 * ns + len(self.rad_pairs)
        assert self.dim == (p + 1) * (p + 3)

        self.dof_tags: list[tuple] = []
        rows = []
        # edge moments
        ng = p + 2  # Gauss points per edge: exact for degree 2p+1 traces
        gl, gw = leggauss(ng)
        for le in range(3):
            i0, i1 = LOCAL_EDGES[le]
            a, b = coords[i0], coords[i1]
            if edge_flip[le]:
                a, b = b, a
            t = b - a
            length = np.linalg.norm(t)
            normal = np.array([t[1], -t[0]]) / length
            pts = a[None, :] + 0.5 * (gl[:, None] + 1.0) * t[None, :]
            vals, _ = self._eval_generators(pts)
            wn = vals @ normal  # (ng, dim)
            for k in range(p + 1):
                leg = np.polynomial.legendre.Legendre.basis(k)(gl)
                # ds = length/2 dgl
                rows.append((0.5 * length) * (gw * leg) @ wn)
                self.dof_tags.append(("edge", le, k))
        # interior moments
        if p >= 1:
            rule = quad_rule(2 * p)
            pts = rule.physical_points(coords)
            w = rule.weights * 2.0 * area
            vals, _ = self._eval_generators(pts)
            ipairs = _scalar_monomial_pairs(p - 1)
            xi = (pts[:, 0] - self.center[0]) / self.scale
            eta = (pts[:, 1] - self.center[1]) / self.scale
            mono = _eval_2d_monomials(ipairs, xi, eta)
            for comp in range(2):
                for c in range(len(ipairs)):
                    rows.append((w * mono[:, c]) @ vals[:, :, comp])
                    self.dof_tags.append(("interior", comp, c))
        dof_matrix = np.array(rows)  # (dim, dim) applied to generators
        self.coeff = np.linalg.solve(dof_matrix, np.eye(self.dim))
        # coeff column j = generator coefficients of basis function j

    def _eval_generators(self, pts: np.ndarray):
        """Generator values (n, dim, 2) and divergences (n, dim)."""
        xi = (pts[:, 0] - self.center[0]) / self.scale
        eta = (pts[:, 1] - self.center[1]) / self.scale
        mono = _eval_2d_monomials(self.pairs, xi, eta)
        dmx, dmy = _eval_2d_monomial_partials(self.pairs, xi, eta)
        ns = len(self.pairs)
        n = pts.shape[0]
        vals = np.zeros((n, self.dim, 2))
        divs = np.zeros((n, self.dim))
        vals[:, :ns, 0] = mono
        divs[:, :ns] = dmx / self.scale
        vals[:, ns : 2 * ns, 1] = mono
        divs[:, ns : 2 * ns] = dmy / self.scale
        rmono = _eval_2d_monomials(self.rad_pairs, xi, eta)
        rdx, rdy = _eval_2d_monomial_partials(self.rad_pairs, xi, eta)
        for c in range(len(self.rad_pairs)):
            vals[:, 2 * ns + c, 0] = xi * rmono[:, c]
            vals[:, 2 * ns + c, 1] = eta * rmono[:, c]
            divs[:, 2 * ns + c] = (
                2.0 * rmono[:, c] + xi * rdx[:, c] + eta * rdy[:, c]
            ) / self.scale
        return vals, divs

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """Basis function values at physical points, shape (n, dim, 2)."""
        vals, _ = self._eval_generators(pts)
        return np.einsum("ngd,gj->njd", vals, self.coeff)

    def eval_div(self, pts: np.ndarray) -> np.ndarray:
        """Basis function divergences at physical points, shape (n, dim)."""
        _, divs = self._eval_generators(pts)
        return divs @ self.coeff

    def apply_dofs(self, func) -> np.ndarray:
        """Apply this element's DOF functionals to an arbitrary vector field
        given as ``func(points) -> (n, 2)`` (quadrature-based, exact for
        polynomial fields of the basis degree)."""
        out = np.empty(self.dim)
        ng = self.degree + 2
        gl, gw = leggauss(ng)
        i = 0
        for le in range(3):
            i0, i1 = LOCAL_EDGES[le]
            a, b = self.coords[i0], self.coords[i1]
            if self.edge_flip[le]:
                a, b = b, a
            t = b - a
            length = np.linalg.norm(t)
            normal = np.array([t[1], -t[0]]) / length
            pts = a[None, :] + 0.5 * (gl[:, None] + 1.0) * t[None, :]
            wn = func(pts) @ normal
            for k in range(self.degree + 1):
                leg = np.polynomial.legendre.Legendre.basis(k)(gl)
                out[i] = (0.5 * length) * (gw * leg) @ wn
                i += 1
        if self.degree >= 1:
            rule = quad_rule(2 * self.degree)
            pts = rule.physical_points(self.coords)
            w = rule.weights * 2.0 * triangle_area(self.coords)
            vals = func(pts)
            ipairs = _scalar_monomial_pairs(self.degree - 1)
            xi = (pts[:, 0] - self.center[0]) / self.scale
            eta = (pts[:, 1] - self.center[1]) / self.scale
            mono = _eval_2d_monomials(ipairs, xi, eta)
            for comp in range(2):
                for c in range(len(ipairs)):
                    out[i] = (w * mono[:, c]) @ vals[:, comp]
                    i += 1
        return out


def rt_basis(p: int) -> RTBasis:
    """RT basis of degree p on the reference triangle (canonical edge
    orientation: low local vertex index to high)."""
    return RTBasis(p, REF_COORDS)


def piola_push_forward(
    coords: np.ndarray, ref_values: np.ndarray, ref_divs: np.ndarray | None = None
):
    """Contravariant (divergence-preserving) map of reference vector fields.

    ``ref_values`` has shape (..., 2); values transform by J/det(J), and
    divergences scale by 1/det(J).
    """
    coords = np.asarray(coords, dtype=float)
    jac = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    det = np.linalg.det(jac)
    if abs(det) < 1e-300:
        raise ValueError("degenerate triangle")
    vals = ref_values @ (jac.T / det)
    if ref_divs is None:
        return vals
    return vals, ref_divs / det


def ref_to_physical(coords: np.ndarray, ref_pts: np.ndarray) -> np.ndarray:
    """Affine image of reference-triangle points on the given element."""
    coords = np.asarray(coords, dtype=float)
    jac = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    return ref_pts @ jac.T + coords[0]
