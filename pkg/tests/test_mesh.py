"""Mesh construction, MEDIT I/O, bisection refinement, patches, geometry."""

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qifem import mesh as msh


class TestCrisscross:
    def test_unit_square_n1(self):
        m = msh.build_crisscross(1, "unit_square")
        assert m.n_vertices == 5
        assert m.n_triangles == 4
        areas = [msh.element_geometry(m, t) for t in range(4)]
        assert all(g.h == 1.0 for g in areas)

    def test_square2_extent(self):
        m = msh.build_crisscross(4, "square2")
        assert m.vertices.min() == -1.0 and m.vertices.max() == 1.0
        assert m.n_triangles == 64

    def test_lshape_requires_even(self):
        with pytest.raises(ValueError):
            msh.build_crisscross(3, "lshape")

    def test_lshape_omits_first_quadrant(self):
        m = msh.build_crisscross(4, "lshape")
        assert m.n_triangles == 48
        centers = m.vertices[m.triangles].mean(axis=1)
        assert not np.any((centers[:, 0] > 0) & (centers[:, 1] > 0))

    def test_unknown_domain(self):
        with pytest.raises(ValueError):
            msh.build_crisscross(2, "pentagon")

    @given(n=st.integers(1, 5), domain=st.sampled_from(["unit_square", "square2"]))
    @settings(max_examples=10, deadline=None)
    def test_euler_characteristic(self, n, domain):
        m = msh.build_crisscross(n, domain)
        # simply connected planar mesh: V - E + T = 1
        assert m.n_vertices - len(m.edges) + m.n_triangles == 1

    def test_total_area(self):
        m = msh.build_crisscross(3, "square2")
        total = sum(
            msh.triangle_area(m.coords(t)) for t in range(m.n_triangles)
        )
        assert abs(total - 4.0) < 1e-12


class TestTopology:
    def test_boundary_classification(self):
        m = msh.build_crisscross(2, "unit_square")
        # boundary vertices: the 8 outer grid vertices
        assert int(m.boundary_vertex.sum()) == 8
        for e in np.flatnonzero(m.boundary_edge):
            assert m.edge_tris[e, 1] == -1

    def test_rejects_nonmanifold_edge(self):
        verts = np.array([[0, 0], [1, 0], [0, 1], [0.5, -1], [2, 2.0]])
        tris = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])  # edge (0,1) thrice
        with pytest.raises(msh.MeshError):
            msh.Mesh(verts, tris)

    def test_rejects_negative_orientation(self):
        verts = np.array([[0, 0], [1, 0], [0, 1.0]])
        with pytest.raises(msh.MeshError):
            msh.Mesh(verts, np.array([[0, 2, 1]]))


class TestElementGeometry:
    def test_right_isosceles(self):
        m = msh.Mesh(
            np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]])
        )
        g = msh.element_geometry(m, 0)
        assert abs(g.h - math.sqrt(2.0)) < 1e-12
        # inscribed diameter 2 * area / semiperimeter
        assert abs(g.rho - 2.0 * 0.5 / ((2.0 + math.sqrt(2.0)) / 2.0)) < 1e-12
        # distance from the right-angle vertex to the hypotenuse
        assert abs(g.tau[0] - 1.0 / math.sqrt(2.0)) < 1e-12
        assert abs(g.tau[1] - 1.0) < 1e-12 and abs(g.tau[2] - 1.0) < 1e-12

    def test_kappa_at_least_geometry_bound(self):
        m = msh.build_crisscross(2, "square2")
        for t in range(m.n_triangles):
            g = msh.element_geometry(m, t)
            assert g.kappa >= 2.0  # any triangle has h/rho >= sqrt(3) > ... 2 for these


class TestPatches:
    def test_patch_partition(self):
        m = msh.build_crisscross(2, "unit_square")
        patches = msh.vertex_patches(m)
        assert len(patches) == m.n_vertices
        # every element appears in exactly 3 patches
        counts = np.zeros(m.n_triangles, dtype=int)
        for p in patches:
            counts[p.elements] += 1
            for t, lv in zip(p.elements, p.local_vertex):
                assert m.triangles[t][lv] == p.center
        assert np.all(counts == 3)

    def test_center_square_patch(self):
        m = msh.build_crisscross(1, "unit_square")
        patches = msh.vertex_patches(m)
        center = [p for p in patches if not p.is_boundary]
        assert len(center) == 1 and len(center[0].elements) == 4


class TestMedit:
    def test_roundtrip_bitwise(self):
        m = msh.build_crisscross(2, "square2")
        text = msh.medit_roundtrip_string(m)
        m2 = msh.read_medit(text)
        assert np.array_equal(m.vertices, m2.vertices)
        assert np.array_equal(m.triangles, m2.triangles)
        assert msh.medit_roundtrip_string(m2) == text

    def test_parse_error_reports_line(self):
        bad = "MeshVersionFormatted 2\n\nDimension 2\n\nVertices\n1\n0.0 oops 0\n"
        with pytest.raises(msh.MeshParseError) as exc:
            msh.read_medit(bad)
        assert "line 7" in str(exc.value)

    def test_rejects_dimension_3(self):
        with pytest.raises(msh.MeshParseError):
            msh.read_medit("MeshVersionFormatted 2\nDimension 3\nEnd\n")

    def test_missing_sections(self):
        with pytest.raises(msh.MeshParseError):
            msh.read_medit("MeshVersionFormatted 2\nDimension 2\nEnd\n")

    def test_rejects_bad_index(self):
        bad = (
            "MeshVersionFormatted 2\nDimension 2\n"
            "Vertices\n3\n0 0 0\n1 0 0\n0 1 0\n"
            "Triangles\n1\n1 2 9 0\nEnd\n"
        )
        with pytest.raises(msh.MeshParseError):
            msh.read_medit(bad)

    def test_comments_and_refs(self):
        text = (
            "# comment line\nMeshVersionFormatted 2\nDimension 2\n"
            "Vertices\n3\n0 0 5\n1 0 6\n0 1 7\n"
            "Triangles\n1\n1 2 3 9\nEnd\n"
        )
        m = msh.read_medit(text)
        assert list(m.vertex_refs) == [5, 6, 7]
        assert list(m.triangle_refs) == [9]


class TestBisection:
    def test_marked_elements_are_split(self):
        m = msh.build_crisscross(1, "unit_square")
        m2 = msh.refine_bisection(m, [0])
        assert m2.n_triangles > m.n_triangles
        total = sum(msh.triangle_area(m2.coords(t)) for t in range(m2.n_triangles))
        assert abs(total - 1.0) < 1e-12

    @given(n=st.integers(1, 3), seed=st.integers(0, 30))
    @settings(max_examples=15, deadline=None)
    def test_conformity_and_area_preserved(self, n, seed):
        m = msh.build_crisscross(n, "unit_square")
        rng = np.random.default_rng(seed)
        marked = rng.choice(m.n_triangles, size=max(1, m.n_triangles // 3), replace=False)
        m2 = msh.refine_bisection(m, marked)  # Mesh construction validates matching
        total = sum(msh.triangle_area(m2.coords(t)) for t in range(m2.n_triangles))
        assert abs(total - 1.0) < 1e-10
        # no hanging nodes: every vertex of every triangle that lies on an
        # interior edge of a neighbor must be one of its endpoints; matching
        # is fully checked by Mesh.__post_init__ (raises on bad adjacency)
        assert m2.n_vertices > m.n_vertices

    def test_budget_error(self):
        m = msh.build_crisscross(2, "unit_square")
        with pytest.raises(msh.RefinementBudgetError):
            msh.refine_bisection(m, range(m.n_triangles), max_elements=17)

    def test_repeated_refinement_bounded_shapes(self):
        # newest-vertex bisection produces finitely many similarity classes:
        # shape regularity must not degrade over repeated uniform refinement
        m = msh.build_crisscross(1, "unit_square")
        worst = []
        for _ in range(4):
            m = msh.refine_bisection(m, range(m.n_triangles))
            worst.append(
                max(msh.element_geometry(m, t).kappa for t in range(m.n_triangles))
            )
        assert max(worst) <= 1.01 * worst[0] + 1e-9


class TestGraded:
    def test_fixed_point_returns_input(self):
        m = msh.build_crisscross(2, "unit_square")
        out = msh.refine_graded(m, h_max=10.0)
        assert out is m

    def test_grading_postcondition(self):
        m = msh.build_crisscross(4, "lshape")
        h_max = 0.25
        out = msh.refine_graded(m, h_max)

        def rule(center):
            return max(h_max**1.5, np.linalg.norm(center) ** (1 / 3) * h_max)

        for t in range(out.n_triangles):
            coords = out.coords(t)
            h = msh.element_geometry(out, t).h
            assert h <= rule(coords.mean(axis=0)) + 1e-12

    def test_budget(self):
        m = msh.build_crisscross(4, "lshape")
        with pytest.raises(msh.RefinementBudgetError):
            msh.refine_graded(m, 0.01, max_elements=100)
