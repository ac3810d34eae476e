"""The three local solves: elementwise H1-orthogonal projection onto broken
polynomials with mean preservation, the patch-conforming potential
reconstruction, and the divergence-free patch flux reconstruction.

All patch operators are assembled once per patch (:class:`PatchOperators`) and
exposed both as linear maps on broken coefficient blocks (needed by the
certified-constant eigenproblems) and as one-shot solves for a given field.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import basis as bas
from .assembly import ElementBatch, NodalSpace
from .linalg import SingularMatrixError
from .mesh import Mesh, VertexPatch


@dataclass
class BrokenField:
    """Piecewise polynomial of degree <= p, possibly discontinuous across
    edges; one monomial coefficient block per element."""

    mesh: Mesh
    degree: int
    coeffs: np.ndarray  # (n_triangles, poly_dim(degree))

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expected = (self.mesh.n_triangles, bas.poly_dim(self.degree))
        if self.coeffs.shape != expected:
            raise ValueError(
                f"coefficient block shape {self.coeffs.shape} != {expected}"
            )

    def eval_bary(self, bary: np.ndarray, elements=None) -> np.ndarray:
        """Values at the same barycentric points on each element, shape
        (n_el, n_pts)."""
        vals = bas.eval_monomials(self.degree, bary)  # (Q, dim)
        coeffs = self.coeffs if elements is None else self.coeffs[elements]
        return coeffs @ vals.T

    def grad_bary(
        self, bary: np.ndarray, batch: ElementBatch, elements=None
    ) -> np.ndarray:
        """Gradients at the same barycentric points on each element, shape
        (n_el, n_pts, 2)."""
        partials = bas.eval_monomial_bary_partials(self.degree, bary)  # (Q, dim, 3)
        grads = batch.bary_grads if elements is None else batch.bary_grads[elements]
        coeffs = self.coeffs if elements is None else self.coeffs[elements]
        return np.einsum("tm,qmk,tkd->tqd", coeffs, partials, grads)


def local_best(
    u, mesh: Mesh, p: int, quad_exactness: int | None = None
) -> BrokenField:
    """Elementwise H1 projection onto P_p with mean preservation.

    On each element K the output q solves (grad q, grad m) = (grad u, grad m)
    for every degree-p monomial m together with (q, 1)_K = (u, 1)_K, enforced
    through a bordered symmetric system.  Data integrals use quadrature of
    exactness ``quad_exactness`` (default 2p + 8).
    """
    if quad_exactness is None:
        quad_exactness = 2 * p + 8
    batch = ElementBatch(mesh)
    rule = bas.quad_rule(quad_exactness)
    dim = bas.poly_dim(p)

    stiff = batch.stiffness_monomial(p)  # (T, dim, dim)
    ints = batch.monomial_integrals(p)  # (T, dim)
    pts = batch.quad_points(rule)  # (T, Q, 2)
    w = batch.quad_weights(rule)  # (T, Q)
    flat = pts.reshape(-1, 2)
    gu = np.asarray(u.gradient(flat)).reshape(pts.shape[0], -1, 2)
    vu = np.asarray(u.value(flat)).reshape(pts.shape[0], -1)

    grads = batch.monomial_gradients(p, rule)  # (T, Q, dim, 2)
    rhs_grad = np.einsum("tq,tqd,tqmd->tm", w, gu, grads)
    rhs_mean = np.einsum("tq,tq->t", w, vu)

    n = mesh.n_triangles
    sys = np.zeros((n, dim + 1, dim + 1))
    sys[:, :dim, :dim] = stiff
    sys[:, :dim, dim] = ints
    sys[:, dim, :dim] = ints
    rhs = np.empty((n, dim + 1))
    rhs[:, :dim] = rhs_grad
    rhs[:, dim] = rhs_mean
    try:
        sol = np.linalg.solve(sys, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"constrained projection system: {exc}") from None
    return BrokenField(mesh, p, sol[:, :dim])


# ---------------------------------------------------------------------------
# patch spaces


PatchConformingSpace = NodalSpace  # zero trace on the patch boundary


class PatchFluxSpace:
    """H(div)-conforming degree-p flux space on a vertex patch paired with the
    broken degree-p scalar space.

    Edge degrees of freedom are shared across interior patch edges through a
    single global index per (edge, moment); boundary-edge DOFs stay free.
    Per-element bases take their edge orientation from the global low-to-high
    vertex order, so matched DOFs imply normal-trace continuity directly.
    """

    def __init__(self, mesh: Mesh, patch: VertexPatch, degree: int):
        self.mesh = mesh
        self.patch = patch
        self.degree = degree
        p = degree
        els = patch.elements
        edge_ids = sorted({int(e) for t in els for e in mesh.tri_edges[t]})
        self.edge_ids = edge_ids
        edge_pos = {e: i for i, e in enumerate(edge_ids)}
        n_int = 2 * bas.poly_dim(p - 1) if p >= 1 else 0
        self.n_dofs = (p + 1) * len(edge_ids) + len(els) * n_int
        int_offset = (p + 1) * len(edge_ids)

        self.bases: list[bas.RTBasis] = []
        self.maps: list[np.ndarray] = []  # element dof -> global dof index
        dimpm1 = bas.poly_dim(p - 1) if p >= 1 else 0
        for et, t in enumerate(els):
            tri = mesh.triangles[t]
            flips = tuple(
                bool(tri[j] > tri[k]) for (j, k) in bas.LOCAL_EDGES
            )
            rt = bas.RTBasis(p, mesh.coords(t), flips)
            gmap = np.empty(rt.dim, dtype=int)
            for d, tag in enumerate(rt.dof_tags):
                if tag[0] == "edge":
                    _, le, k = tag
                    e = int(mesh.tri_edges[t][le])
                    gmap[d] = (p + 1) * edge_pos[e] + k
                else:
                    _, comp, c = tag
                    gmap[d] = int_offset + et * n_int + comp * dimpm1 + c
            self.bases.append(rt)
            self.maps.append(gmap)


@dataclass
class FluxField:
    """Member of the patch flux space, divergence-free by construction."""

    space: PatchFluxSpace
    coeffs: np.ndarray  # (n_dofs,)
    mass: np.ndarray  # flux-space mass matrix (shared with the patch operators)

    def norm(self) -> float:
        """L2 norm over the patch."""
        return float(np.sqrt(max(self.coeffs @ self.mass @ self.coeffs, 0.0)))

    def eval_element(self, et: int, pts: np.ndarray) -> np.ndarray:
        """Values on patch element ``et`` at physical points, shape (n, 2)."""
        rt = self.space.bases[et]
        local = self.coeffs[self.space.maps[et]]
        return np.einsum("njd,j->nd", rt.eval(pts), local)

    def div_norm(self) -> float:
        """Elementwise-maximal L2 norm of the divergence (should vanish)."""
        p = self.space.degree
        rule = bas.quad_rule(2 * p)
        worst = 0.0
        for et, t in enumerate(self.space.patch.elements):
            rt = self.space.bases[et]
            coords = self.space.mesh.coords(t)
            pts = rule.physical_points(coords)
            w = 2.0 * bas.triangle_area(coords) * rule.weights
            dv = rt.eval_div(pts) @ self.coeffs[self.space.maps[et]]
            worst = max(worst, float(np.sqrt(max(w @ dv**2, 0.0))))
        return worst


class InfSupError(SingularMatrixError):
    """The patch saddle-point matrix is singular, which signals a degree-of-
    freedom identification bug (the pair of spaces is inf-sup stable)."""


class PatchOperators:
    """All patch-local linear maps for one vertex patch at fixed degree.

    Broken coefficient vectors on the patch are flattened element-major:
    ``u[e * dim : (e + 1) * dim]`` are the monomial coefficients on patch
    element ``e`` in ``patch.elements`` order.
    """

    def __init__(
        self,
        mesh: Mesh,
        patch: VertexPatch,
        degree: int,
        batch: ElementBatch | None = None,
    ):
        self.mesh = mesh
        self.patch = patch
        self.degree = degree
        self.batch = batch if batch is not None else ElementBatch(mesh)
        self.n_elements = len(patch.elements)
        self.dim_p = bas.poly_dim(degree)
        self.n_broken = self.n_elements * self.dim_p

    # -- potential side -----------------------------------------------------

    @cached_property
    def conforming(self) -> NodalSpace:
        return NodalSpace(self.mesh, self.degree, self.patch.elements)

    @cached_property
    def stiffness_blocks(self) -> np.ndarray:
        """(E, dim, dim) broken-gradient Gram matrices per patch element."""
        return self.batch.stiffness_monomial(self.degree, self.patch.elements)

    @cached_property
    def hat_maps(self) -> np.ndarray:
        """(E, dim_{p+1}, dim) per-element multiplication by the hat function
        of the patch center (a barycentric coordinate)."""
        return np.stack(
            [
                bas.degree_raise_matrix(self.degree, int(lv))
                for lv in self.patch.local_vertex
            ]
        )

    @cached_property
    def reduce_maps(self) -> np.ndarray:
        """(E, dim, dim) degree-reduced hat multiplication: coefficients of
        the nodal interpolation of (hat * u) per element."""
        reduce = bas.lagrange_reduce_matrix(self.degree)
        return np.einsum("mr,erk->emk", reduce, self.hat_maps)

    @cached_property
    def conforming_maps(self) -> np.ndarray:
        """(E, dim, N_free) monomial coefficients of each free conforming dof
        restricted to each element."""
        space = self.conforming
        n2m = space.basis.nodal_to_monomial
        out = np.zeros((self.n_elements, self.dim_p, space.n_dofs))
        for et in range(self.n_elements):
            idx = space.element_nodes[et]
            for i, g in enumerate(idx):
                if g >= 0:
                    out[et, :, g] += n2m[:, i]
        return out

    @cached_property
    def _potential_system(self):
        """Cholesky factor of the patch conforming stiffness and the map from
        broken coefficients to the conforming load vector."""
        c = self.conforming_maps  # (E, dim, N)
        s = self.stiffness_blocks  # (E, dim, dim)
        if self.conforming.n_dofs == 0:
            return None, np.zeros((0, self.n_broken))
        stiff = np.einsum("emn,emk,ekq->nq", c, s, c)
        load_map = np.einsum("emn,emk->nek", c, s).reshape(
            self.conforming.n_dofs, -1
        ) @ scipy.linalg.block_diag(*self.reduce_maps)
        try:
            factor = scipy.linalg.cho_factor(stiff, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"patch stiffness not SPD: {exc}") from None
        return factor, load_map

    def potential(self, u: np.ndarray) -> np.ndarray:
        """Free conforming coefficients of the potential reconstruction of the
        broken coefficient vector ``u`` (flattened element-major)."""
        factor, load_map = self._potential_system
        rhs = load_map @ np.asarray(u, dtype=float)
        if factor is None:
            return rhs[:0]
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)

    def expand_conforming(self, values: np.ndarray) -> np.ndarray:
        """Conforming free coefficients -> flattened broken coefficients."""
        return np.einsum("emn,n->em", self.conforming_maps, values).ravel()

    @cached_property
    def broken_gram(self) -> np.ndarray:
        """(n, n) block-diagonal broken-gradient Gram matrix (the K matrix of
        the patch eigenproblem)."""
        return scipy.linalg.block_diag(*self.stiffness_blocks)

    @cached_property
    def defect_matrix(self) -> np.ndarray:
        """(n, n) matrix D mapping broken coefficients u to the broken
        coefficients of (degree-reduced hat-weighted u) minus its potential
        reconstruction."""
        factor, load_map = self._potential_system
        iop = scipy.linalg.block_diag(*self.reduce_maps)
        if factor is None:
            return iop
        s_free = scipy.linalg.cho_solve(factor, load_map, check_finite=False)
        expand = self.conforming_maps.reshape(-1, self.conforming.n_dofs)
        return iop - expand @ s_free

    def broken_h1_norm(self, u: np.ndarray) -> float:
        """Broken H1 seminorm of a flattened broken coefficient vector."""
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(max(u @ self.broken_gram @ u, 0.0)))

    # -- flux side ----------------------------------------------------------

    @cached_property
    def flux_space(self) -> PatchFluxSpace:
        return PatchFluxSpace(self.mesh, self.patch, self.degree)

    @cached_property
    def _flux_matrices(self):
        """Flux mass matrix M, divergence constraint B, and data map F with
        F u = (grad(hat * u), flux basis) for broken coefficients u."""
        p = self.degree
        xs = self.flux_space
        n_x = xs.n_dofs
        n_y = self.n_broken
        mass = np.zeros((n_x, n_x))
        bdiv = np.zeros((n_y, n_x))
        data = np.zeros((n_x, self.n_broken))
        rule = bas.quad_rule(2 * p + 2)
        vals_p = bas.eval_monomials(p, rule.points)  # (Q, dim_p)
        partials = bas.eval_monomial_bary_partials(p + 1, rule.points)
        for et, t in enumerate(self.patch.elements):
            rt = xs.bases[et]
            gmap = xs.maps[et]
            coords = self.mesh.coords(t)
            pts = rule.physical_points(coords)
            w = 2.0 * bas.triangle_area(coords) * rule.weights
            v = rt.eval(pts)  # (Q, dimRT, 2)
            dv = rt.eval_div(pts)  # (Q, dimRT)
            mass[np.ix_(gmap, gmap)] += np.einsum("q,qid,qjd->ij", w, v, v)
            rows = slice(et * self.dim_p, (et + 1) * self.dim_p)
            bdiv[rows, gmap] += np.einsum("q,qm,qj->mj", w, vals_p, dv)
            grads = np.einsum(
                "qmk,kd->qmd", partials, bas.barycentric_gradients(coords)
            )  # gradients of degree-(p+1) monomials
            g = np.einsum("q,qid,qmd->im", w, v, grads)
            data[np.ix_(gmap, range(et * self.dim_p, (et + 1) * self.dim_p))] += (
                g @ self.hat_maps[et]
            )
        return mass, bdiv, data

    @cached_property
    def flux_mass(self) -> np.ndarray:
        return self._flux_matrices[0]

    @cached_property
    def _saddle_factor(self):
        mass, bdiv, _ = self._flux_matrices
        n_x, n_y = mass.shape[0], bdiv.shape[0]
        saddle = np.zeros((n_x + n_y, n_x + n_y))
        saddle[:n_x, :n_x] = mass
        saddle[:n_x, n_x:] = bdiv.T
        saddle[n_x:, :n_x] = bdiv
        try:
            lu, piv = scipy.linalg.lu_factor(saddle, check_finite=False)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover
            raise InfSupError(f"saddle factorization failed: {exc}") from None
        pivots = np.abs(np.diag(lu))
        if pivots.min(initial=np.inf) <= 1e-13 * max(np.abs(saddle).max(), 1.0):
            raise InfSupError("patch saddle-point matrix is numerically singular")
        return lu, piv

    @cached_property
    def flux_matrix(self) -> np.ndarray:
        """(n_x, n) matrix R mapping broken coefficients to flux-space
        coefficients of the flux reconstruction."""
        mass, _, data = self._flux_matrices
        n_x = mass.shape[0]
        rhs = np.zeros((n_x + self.n_broken, self.n_broken))
        rhs[:n_x] = data
        sol = scipy.linalg.lu_solve(self._saddle_factor, rhs, check_finite=False)
        return sol[:n_x]

    def flux(self, u: np.ndarray) -> FluxField:
        coeffs = self.flux_matrix @ np.asarray(u, dtype=float)
        return FluxField(self.flux_space, coeffs, self.flux_mass)

    @cached_property
    def divfree_basis(self) -> np.ndarray:
        """(n_x, k) orthonormal basis of the divergence-free subspace of the
        flux space (kernel of the constraint matrix)."""
        _, bdiv, _ = self._flux_matrices
        return scipy.linalg.null_space(bdiv)

    def hat_weighted(self, u: np.ndarray) -> np.ndarray:
        """(E, dim_{p+1}) exact coefficients of hat * u per element."""
        u = np.asarray(u, dtype=float).reshape(self.n_elements, self.dim_p)
        return np.einsum("emk,ek->em", self.hat_maps, u)


# ---------------------------------------------------------------------------
# one-shot entry points


def _patch_coeffs(ops: PatchOperators, u_h) -> np.ndarray:
    if isinstance(u_h, BrokenField):
        if u_h.degree != ops.degree:
            raise ValueError("degree mismatch between field and patch operators")
        return u_h.coeffs[ops.patch.elements].ravel()
    return np.asarray(u_h, dtype=float).ravel()


@dataclass
class PatchPotential:
    """Potential reconstruction: conforming coefficients on a patch space with
    zero trace on the patch boundary."""

    space: NodalSpace
    values: np.ndarray  # free nodal coefficients

    def broken_coeffs(self) -> np.ndarray:
        """(E, dim) monomial coefficient blocks per patch element."""
        return self.space.expand(self.values)


def potential_reconstruction(ops: PatchOperators, u_h) -> PatchPotential:
    """Conforming minimizer of the broken H1 distance to the degree-reduced
    hat-weighted datum on the patch."""
    u = _patch_coeffs(ops, u_h)
    return PatchPotential(ops.conforming, ops.potential(u))


def flux_reconstruction(
    ops: PatchOperators, u_h, div_tol: float = 1e-10
) -> FluxField:
    """Divergence-free best approximation of grad(hat * u_h) in the patch
    flux space, via the mass/divergence saddle-point system."""
    u = _patch_coeffs(ops, u_h)
    field = ops.flux(u)
    scale = max(field.norm(), 1.0)
    dn = field.div_norm()
    if dn > div_tol * scale:
        raise InfSupError(
            f"flux reconstruction is not divergence-free: |div r| = {dn:.2e}"
        )
    return field
