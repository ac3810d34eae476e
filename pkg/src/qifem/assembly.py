"""Shared assembly machinery: vectorized element data and continuous nodal
scalar spaces over element subsets.

A :class:`NodalSpace` identifies principal-lattice Lagrange nodes across
elements (vertex / edge / interior classification with a canonical low-to-high
edge parameterization) and eliminates the nodes lying on the boundary of the
covered subdomain, which yields both the globally conforming space with zero
trace and the patch-local spaces with zero trace on the patch boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import basis as bas
from .mesh import Mesh


@dataclass
class ElementBatch:
    """Vectorized per-element geometry for a mesh."""

    mesh: Mesh

    @cached_property
    def coords(self) -> np.ndarray:  # (T, 3, 2)
        return self.mesh.vertices[self.mesh.triangles]

    @cached_property
    def areas(self) -> np.ndarray:  # (T,)
        c = self.coords
        v1 = c[:, 1] - c[:, 0]
        v2 = c[:, 2] - c[:, 0]
        return 0.5 * (v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0])

    @cached_property
    def bary_grads(self) -> np.ndarray:  # (T, 3, 2)
        c = self.coords
        out = np.empty((len(c), 3, 2))
        for i, (j, k) in enumerate(bas.LOCAL_EDGES):
            e = c[:, k] - c[:, j]
            out[:, i, 0] = -e[:, 1]
            out[:, i, 1] = e[:, 0]
        return out / (2.0 * self.areas)[:, None, None]

    def quad_points(self, rule: bas.QuadratureRule) -> np.ndarray:
        """Physical quadrature points, shape (T, Q, 2)."""
        return np.einsum("qk,tkd->tqd", rule.points, self.coords)

    def quad_weights(self, rule: bas.QuadratureRule) -> np.ndarray:
        """Physical quadrature weights, shape (T, Q)."""
        return 2.0 * self.areas[:, None] * rule.weights[None, :]

    def monomial_gradients(
        self, q: int, rule: bas.QuadratureRule, elements=None
    ) -> np.ndarray:
        """Physical gradients of degree-q monomials at the rule's points,
        shape (T, Q, dim, 2)."""
        partials = bas.eval_monomial_bary_partials(q, rule.points)  # (Q, dim, 3)
        grads = self.bary_grads if elements is None else self.bary_grads[elements]
        return np.einsum("qmk,tkd->tqmd", partials, grads)

    def stiffness_monomial(self, q: int, elements=None) -> np.ndarray:
        """Gradient Gram matrices of the degree-q monomials, shape
        (T, dim, dim); exact (polynomial integrand)."""
        rule = bas.quad_rule(max(2 * (q - 1), 0))
        g = self.monomial_gradients(q, rule, elements)
        areas = self.areas if elements is None else self.areas[elements]
        w = 2.0 * areas[:, None] * rule.weights[None, :]
        return np.einsum("tq,tqmd,tqnd->tmn", w, g, g)

    def mass_monomial(self, q: int, elements=None) -> np.ndarray:
        """Mass matrices of the degree-q monomials, shape (T, dim, dim)."""
        rule = bas.quad_rule(2 * q)
        vals = bas.eval_monomials(q, rule.points)  # (Q, dim)
        areas = self.areas if elements is None else self.areas[elements]
        unit = np.einsum("q,qm,qn->mn", rule.weights, vals, vals)
        return 2.0 * areas[:, None, None] * unit[None, :, :]

    def monomial_integrals(self, q: int, elements=None) -> np.ndarray:
        """Integral of each degree-q monomial per element, shape (T, dim)."""
        areas = self.areas if elements is None else self.areas[elements]
        return areas[:, None] * bas.monomial_integral_factors(q)[None, :]


VERTEX, EDGE, INTERIOR = 0, 1, 2


class NodalSpace:
    """Continuous P_p Lagrange space over a subset of elements with the nodes
    on the subdomain boundary eliminated (zero trace)."""

    def __init__(self, mesh: Mesh, degree: int, elements=None):
        self.mesh = mesh
        self.degree = degree
        if elements is None:
            elements = np.arange(mesh.n_triangles)
        self.elements = np.asarray(elements, dtype=int)
        p = degree
        basis_p = bas.p_basis(p)
        self.basis = basis_p
        dim = bas.poly_dim(p)
        midx = bas.multi_indices(p)

        # subdomain boundary: edges adjacent to < 2 subset elements,
        # and every vertex on such an edge
        edge_count: dict[int, int] = {}
        for t in self.elements:
            for e in mesh.tri_edges[t]:
                edge_count[e] = edge_count.get(e, 0) + 1
        bdry_edges = {e for e, c in edge_count.items() if c < 2}
        bdry_verts = set(mesh.edges[sorted(bdry_edges)].ravel().tolist())

        self.node_index: dict[tuple, int] = {}
        self.node_keys: list[tuple] = []
        self.element_nodes = np.full((len(self.elements), dim), -1, dtype=int)
        for et, t in enumerate(self.elements):
            tri = mesh.triangles[t]
            for i, (a, b, c) in enumerate(midx):
                if a == p or b == p or c == p:
                    v = tri[int(np.argmax([a, b, c]))]
                    if v in bdry_verts:
                        continue
                    key = (VERTEX, int(v))
                elif a == 0 or b == 0 or c == 0:
                    zero_pos = [a, b, c].index(0)
                    e = int(mesh.tri_edges[t][zero_pos])
                    if e in bdry_edges:
                        continue
                    j, k = bas.LOCAL_EDGES[zero_pos]
                    vj, vk = int(tri[j]), int(tri[k])
                    wj = (a, b, c)[j]  # lattice weight on vj
                    step = p - wj if vj < vk else wj
                    key = (EDGE, e, step)
                else:
                    key = (INTERIOR, int(t), i)
                idx = self.node_index.get(key)
                if idx is None:
                    idx = len(self.node_keys)
                    self.node_index[key] = idx
                    self.node_keys.append(key)
                self.element_nodes[et, i] = idx
        self.n_dofs = len(self.node_keys)

    @cached_property
    def node_coords(self) -> np.ndarray:
        """Physical coordinates of the free nodes, shape (N, 2)."""
        out = np.empty((self.n_dofs, 2))
        nodes = bas.lattice_nodes(self.degree)
        for et, t in enumerate(self.elements):
            coords = self.mesh.coords(t)
            pts = nodes @ coords
            idx = self.element_nodes[et]
            mask = idx >= 0
            out[idx[mask]] = pts[mask]
        return out

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Free nodal values -> per-element monomial coefficients,
        shape (len(elements), dim)."""
        dim = bas.poly_dim(self.degree)
        nodal = np.zeros((len(self.elements), dim))
        mask = self.element_nodes >= 0
        nodal[mask] = values[self.element_nodes[mask]]
        return nodal @ self.basis.nodal_to_monomial.T

    def element_maps(self) -> np.ndarray:
        """Per-element matrix mapping free dofs used by that element to
        monomial coefficients: returns (n_el, dim, dim) matrices M with
        columns indexed like ``element_nodes`` (constrained columns zero)."""
        # rarely needed densely; provided for patch-scale assembly
        n2m = self.basis.nodal_to_monomial
        return n2m

    def assemble_stiffness_dense(self, batch: ElementBatch) -> np.ndarray:
        """Dense stiffness matrix of the space (patch-scale use)."""
        s_mono = batch.stiffness_monomial(self.degree, self.elements)
        n2m = self.basis.nodal_to_monomial
        s_nodal = np.einsum("mi,tmn,nj->tij", n2m, s_mono, n2m)
        out = np.zeros((self.n_dofs, self.n_dofs))
        for et in range(len(self.elements)):
            idx = self.element_nodes[et]
            mask = idx >= 0
            out[np.ix_(idx[mask], idx[mask])] += s_nodal[et][np.ix_(mask, mask)]
        return out

    def assemble_stiffness_sparse(self, batch: ElementBatch):
        """CSR stiffness matrix of the space (global-scale use)."""
        import scipy.sparse

        s_mono = batch.stiffness_monomial(self.degree, self.elements)
        n2m = self.basis.nodal_to_monomial
        s_nodal = np.einsum("mi,tmn,nj->tij", n2m, s_mono, n2m)
        rows, cols, vals = [], [], []
        for et in range(len(self.elements)):
            idx = self.element_nodes[et]
            mask = idx >= 0
            ii = idx[mask]
            rows.append(np.repeat(ii, len(ii)))
            cols.append(np.tile(ii, len(ii)))
            vals.append(s_nodal[et][np.ix_(mask, mask)].ravel())
        mat = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_dofs, self.n_dofs),
        )
        return mat.tocsr()

    def scatter_rhs(self, per_element_nodal: np.ndarray) -> np.ndarray:
        """Accumulate per-element nodal load vectors (n_el, dim) into a free
        dof vector."""
        out = np.zeros(self.n_dofs)
        mask = self.element_nodes >= 0
        np.add.at(out, self.element_nodes[mask], per_element_nodal[mask])
        return out
