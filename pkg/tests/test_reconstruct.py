"""Elementwise constrained projection, patch potential reconstruction, and
divergence-free patch flux reconstruction."""

import numpy as np
import pytest

from qifem import basis as bas
from qifem.assembly import ElementBatch, NodalSpace
from qifem.mesh import build_crisscross, vertex_patches
from qifem.reconstruct import (
    BrokenField,
    PatchOperators,
    flux_reconstruction,
    local_best,
    potential_reconstruction,
)

from conftest import interior_patch, poly_field, sine_field


@pytest.fixture(scope="module")
def mesh():
    return build_crisscross(2, "unit_square")


@pytest.fixture(scope="module")
def ops(mesh):
    return PatchOperators(mesh, interior_patch(mesh), 1)


@pytest.fixture(scope="module")
def ops2(mesh):
    return PatchOperators(mesh, interior_patch(mesh), 2)


class TestLocalBest:
    @pytest.mark.parametrize("p", [1, 2])
    def test_reproduces_polynomials(self, mesh, p):
        u = poly_field(1.3, -0.7, c0=0.4, cxx=0.5 * (p > 1), cxy=-0.2 * (p > 1))
        pi = local_best(u, mesh, p)
        pts = np.random.default_rng(0).dirichlet(np.ones(3), 6)
        batch = ElementBatch(mesh)
        phys = np.einsum("qk,tkd->tqd", pts, batch.coords)
        vals = pi.eval_bary(pts)
        exact = u.value(phys.reshape(-1, 2)).reshape(vals.shape)
        assert np.allclose(vals, exact, atol=1e-10)

    def test_mean_preservation(self, mesh):
        # independent oracle: high-order quadrature of the element means
        u = sine_field()
        pi = local_best(u, mesh, 1)
        batch = ElementBatch(mesh)
        rule = bas.quad_rule(20)
        w = batch.quad_weights(rule)
        pts = batch.quad_points(rule)
        mean_u = np.einsum("tq,tq->t", w, u.value(pts.reshape(-1, 2)).reshape(w.shape))
        mean_pi = np.einsum("tq,tq->t", w, pi.eval_bary(rule.points))
        assert np.allclose(mean_u, mean_pi, atol=1e-12)

    def test_gradient_orthogonality(self, mesh):
        # (grad(u - pi u), grad m)_K = 0 for every degree-p monomial m,
        # verified with a finer quadrature than the projection used
        u = sine_field()
        p = 2
        pi = local_best(u, mesh, p, quad_exactness=18)
        batch = ElementBatch(mesh)
        rule = bas.quad_rule(20)
        w = batch.quad_weights(rule)
        pts = batch.quad_points(rule)
        gu = u.gradient(pts.reshape(-1, 2)).reshape(w.shape + (2,))
        gpi = pi.grad_bary(rule.points, batch)
        gm = batch.monomial_gradients(p, rule)
        resid = np.einsum("tq,tqd,tqmd->tm", w, gu - gpi, gm)
        assert np.abs(resid).max() < 1e-12

    def test_refinement_halves_h1_error(self):
        u = sine_field()
        errs = []
        for n in (2, 4):
            m = build_crisscross(n, "unit_square")
            pi = local_best(u, m, 1)
            batch = ElementBatch(m)
            rule = bas.quad_rule(12)
            w = batch.quad_weights(rule)
            pts = batch.quad_points(rule)
            gu = u.gradient(pts.reshape(-1, 2)).reshape(w.shape + (2,))
            diff = gu - pi.grad_bary(rule.points, batch)
            errs.append(np.sqrt(np.einsum("tq,tqd,tqd->", w, diff, diff)))
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_shape_validation(self, mesh):
        with pytest.raises(ValueError):
            BrokenField(mesh, 1, np.zeros((2, 3)))


class TestPotential:
    def test_interior_patch_p1_single_dof(self, ops):
        # at degree 1 the only node interior to the patch is its center
        assert ops.conforming.n_dofs == 1

    def test_zero_datum(self, ops2):
        rec = potential_reconstruction(ops2, np.zeros(ops2.n_broken))
        assert np.allclose(rec.values, 0.0)

    def test_conforming_datum_has_zero_defect(self, ops2):
        # for continuous u the hat-weighted interpolant already lies in the
        # conforming patch space, so the defect vanishes identically
        rng = np.random.default_rng(8)
        vals = rng.standard_normal(ops2.conforming.n_dofs)
        u = ops2.expand_conforming(vals)
        assert ops2.broken_h1_norm(ops2.defect_matrix @ u) < 1e-11

    def test_zero_trace_on_patch_boundary(self, ops2):
        rng = np.random.default_rng(9)
        rec = potential_reconstruction(ops2, rng.standard_normal(ops2.n_broken))
        coeffs = rec.broken_coeffs()
        # evaluate at the two non-center vertices and edge midpoints of
        # every patch element boundary edge: all lie on the patch boundary
        mesh, patch = ops2.mesh, ops2.patch
        for et, (t, lv) in enumerate(zip(patch.elements, patch.local_vertex)):
            for i in range(3):
                if i == lv:
                    continue
                bary = np.zeros((2, 3))
                bary[0, i] = 1.0  # outer vertex
                bary[1] = 0.5 * (1 - np.eye(3)[lv])  # outer edge midpoint
                vals = bas.eval_monomials(2, bary) @ coeffs[et]
                assert np.abs(vals).max() < 1e-12

    def test_minimizer_property(self, ops2):
        rng = np.random.default_rng(10)
        u = rng.standard_normal(ops2.n_broken)
        rec = potential_reconstruction(ops2, u)
        datum = np.einsum(
            "emk,ek->em",
            ops2.reduce_maps,
            u.reshape(ops2.n_elements, ops2.dim_p),
        ).ravel()
        best = ops2.broken_h1_norm(datum - ops2.expand_conforming(rec.values))
        for _ in range(50):
            other = rec.values + 0.1 * rng.standard_normal(rec.values.shape)
            d = ops2.broken_h1_norm(datum - ops2.expand_conforming(other))
            assert d >= best - 1e-12

    def test_defect_matrix_matches_one_shot_solve(self, ops2):
        rng = np.random.default_rng(11)
        u = rng.standard_normal(ops2.n_broken)
        rec = potential_reconstruction(ops2, u)
        datum = np.einsum(
            "emk,ek->em",
            ops2.reduce_maps,
            u.reshape(ops2.n_elements, ops2.dim_p),
        ).ravel()
        direct = datum - ops2.expand_conforming(rec.values)
        assert np.allclose(ops2.defect_matrix @ u, direct, atol=1e-12)

    def test_corner_patch_has_empty_space(self):
        mesh = build_crisscross(1, "unit_square")
        corner = [p for p in vertex_patches(mesh) if len(p.elements) == 2][0]
        ops = PatchOperators(mesh, corner, 1)
        rec = potential_reconstruction(ops, np.zeros(ops.n_broken))
        assert ops.conforming.n_dofs == 0 and rec.values.size == 0


class TestFlux:
    def test_constant_datum_zero_flux(self, ops):
        # u == 1 across the patch: grad(hat * u) is a gradient of a patch
        # function vanishing on the boundary, so the projection onto
        # divergence-free fields is zero
        # in the homogeneous barycentric basis the constant is the sum of all
        # degree-1 monomials
        u = np.ones(ops.n_broken)
        field = flux_reconstruction(ops, u)
        assert field.norm() < 1e-12

    @pytest.mark.parametrize("which", ["ops", "ops2"])
    def test_conforming_datum_zero_flux(self, which, request):
        o = request.getfixturevalue(which)
        rng = np.random.default_rng(12)
        space = NodalSpace(o.mesh, o.degree, o.patch.elements)
        # continuous patch function with zero trace; hat-weighting keeps it in
        # H1_0 of the patch, whose gradients are orthogonal to the flux space
        vals = rng.standard_normal(space.n_dofs)
        u = o.expand_conforming(vals)
        field = flux_reconstruction(o, u)
        assert field.norm() < 1e-10 * max(np.abs(u).max(), 1.0)

    def test_discontinuous_datum_nonzero_flux(self, ops):
        rng = np.random.default_rng(13)
        u = rng.standard_normal(ops.n_broken)
        field = flux_reconstruction(ops, u)
        assert field.norm() > 1e-6

    def test_divergence_free(self, ops2):
        rng = np.random.default_rng(14)
        field = flux_reconstruction(ops2, rng.standard_normal(ops2.n_broken))
        assert field.div_norm() <= 1e-10 * max(field.norm(), 1.0)

    def test_projection_characterization(self, ops2):
        # r is the mass-orthogonal projection of the datum onto the
        # divergence-free subspace: residual orthogonal to every basis field
        rng = np.random.default_rng(15)
        u = rng.standard_normal(ops2.n_broken)
        mass, _, data = ops2._flux_matrices
        r = ops2.flux_matrix @ u
        z = ops2.divfree_basis
        resid = z.T @ (mass @ r - data @ u)
        assert np.abs(resid).max() < 1e-10

    def test_normal_trace_continuity(self, ops):
        # evaluate the reconstructed flux on a shared interior edge from both
        # sides; normal components must agree
        rng = np.random.default_rng(16)
        field = flux_reconstruction(ops, rng.standard_normal(ops.n_broken))
        mesh, patch = ops.mesh, ops.patch
        el_pos = {int(t): et for et, t in enumerate(patch.elements)}
        checked = 0
        for e in ops.flux_space.edge_ids:
            t0, t1 = mesh.edge_tris[e]
            if t0 not in el_pos or t1 not in el_pos or t1 < 0:
                continue
            a, b = mesh.vertices[mesh.edges[e]]
            ts = np.linspace(0.2, 0.8, 4)[:, None]
            pts = a[None, :] + ts * (b - a)[None, :]
            tangent = (b - a) / np.linalg.norm(b - a)
            normal = np.array([tangent[1], -tangent[0]])
            v0 = field.eval_element(el_pos[int(t0)], pts) @ normal
            v1 = field.eval_element(el_pos[int(t1)], pts) @ normal
            assert np.allclose(v0, v1, atol=1e-10)
            checked += 1
        assert checked >= 2

    def test_degree_mismatch_rejected(self, ops, mesh):
        field = BrokenField(mesh, 2, np.zeros((mesh.n_triangles, 6)))
        with pytest.raises(ValueError):
            flux_reconstruction(ops, field)
