"""Shared fixtures: analytic test fields, random shape-regular patches, an
unstructured mesh, and the session-scoped benchmark runs used by the
acceptance suite."""

from __future__ import annotations

import numpy as np
import pytest

from qifem.errorlab import FieldFunction
from qifem.mesh import Mesh, build_crisscross, element_geometry, vertex_patches


def poly_field(cx, cy, c0=0.0, cxx=0.0, cyy=0.0, cxy=0.0) -> FieldFunction:
    """Quadratic polynomial field with analytic gradient and Hessian."""

    def value(x):
        return (
            c0
            + cx * x[:, 0]
            + cy * x[:, 1]
            + cxx * x[:, 0] ** 2
            + cyy * x[:, 1] ** 2
            + cxy * x[:, 0] * x[:, 1]
        )

    def gradient(x):
        return np.column_stack(
            [
                cx + 2 * cxx * x[:, 0] + cxy * x[:, 1],
                cy + 2 * cyy * x[:, 1] + cxy * x[:, 0],
            ]
        )

    def hessian(x):
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = 2 * cxx
        out[:, 1, 1] = 2 * cyy
        out[:, 0, 1] = out[:, 1, 0] = cxy
        return out

    return FieldFunction("poly", value, gradient, hessian=hessian)


def sine_field() -> FieldFunction:
    def value(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def gradient(x):
        return np.pi * np.column_stack(
            [
                np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]),
            ]
        )

    return FieldFunction("sine", value, gradient)


def random_fan_patch(rng: np.random.Generator, max_kappa: float = 6.0) -> Mesh:
    """Single-vertex fan mesh around the origin whose elements all satisfy
    the shape-regularity bound; the patch of vertex 0 is the whole mesh."""
    for _ in range(1000):
        k = int(rng.integers(4, 9))
        jitter = rng.uniform(0.4, 1.6, size=k)
        angles = np.cumsum(jitter)
        angles = angles / angles[-1] * 2.0 * np.pi
        radii = rng.uniform(0.5, 1.5, size=k)
        ring = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
        verts = np.vstack([[0.0, 0.0], ring])
        tris = np.array(
            [[0, 1 + i, 1 + (i + 1) % k] for i in range(k)], dtype=int
        )
        try:
            mesh = Mesh(verts, tris)
        except ValueError:
            continue
        kappas = [element_geometry(mesh, t).kappa for t in range(k)]
        if max(kappas) <= max_kappa:
            return mesh
    raise AssertionError("could not generate a shape-regular fan patch")


def unstructured_square_mesh(n_interior: int = 40, seed: int = 7) -> Mesh:
    """Delaunay mesh of the unit square with deterministic random interior
    points."""
    import scipy.spatial

    rng = np.random.default_rng(seed)
    border = np.linspace(0.0, 1.0, 5)
    edge_pts = []
    for b in border:
        edge_pts += [(b, 0.0), (b, 1.0), (0.0, b), (1.0, b)]
    pts = np.vstack([np.unique(np.array(edge_pts), axis=0),
                     rng.uniform(0.08, 0.92, size=(n_interior, 2))])
    tri = scipy.spatial.Delaunay(pts)
    # enforce positive orientation
    tris = []
    for simplex in tri.simplices:
        a, b, c = pts[simplex]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        tris.append(simplex if cross > 0 else simplex[[0, 2, 1]])
    return Mesh(pts, np.array(tris, dtype=int))


@pytest.fixture(scope="session")
def unstructured_mesh() -> Mesh:
    return unstructured_square_mesh()


@pytest.fixture(scope="session")
def crisscross4_square2() -> Mesh:
    return build_crisscross(4, "square2")


@pytest.fixture(scope="session")
def benchmark_runs():
    """All four benchmark convergence studies at p=1, 4 levels, shared across
    the acceptance criteria."""
    from qifem.errorlab import benchmark_library, convergence_study

    out = {}
    for case in benchmark_library():
        reports, slopes = convergence_study(case, 4, 1)
        out[case.name] = {"case": case, "reports": reports, "slopes": slopes}
    return out


def interior_patch(mesh: Mesh):
    """Some interior vertex patch of the mesh."""
    for patch in vertex_patches(mesh):
        if not patch.is_boundary:
            return patch
    raise AssertionError("mesh has no interior vertex")
