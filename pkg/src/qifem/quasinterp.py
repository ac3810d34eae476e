"""The global quasi-interpolation operator and its two comparison
approximations (global-best H1 projection, nodal Lagrange interpolant).

The operator sums, over all mesh vertices, the patch potential reconstruction
of the elementwise local-best projection; each patch contribution has zero
trace on its patch boundary, so the sum is conforming with zero boundary
trace by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import ElementBatch, NodalSpace
from .linalg import cg_solve
from .mesh import Mesh, vertex_patches
from .reconstruct import BrokenField, PatchOperators, local_best


class ConformingSpace(NodalSpace):
    """Continuous P_p space on the whole mesh with zero boundary trace."""

    def __init__(self, mesh: Mesh, degree: int):
        super().__init__(mesh, degree, None)


@dataclass
class ConformingField:
    space: ConformingSpace
    values: np.ndarray  # (n_dofs,) free nodal values

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n_dofs,):
            raise ValueError("coefficient length does not match the space")

    def to_broken(self) -> BrokenField:
        return BrokenField(
            self.space.mesh, self.space.degree, self.space.expand(self.values)
        )


def quasi_interpolate_broken(
    pi_u: BrokenField,
    space: ConformingSpace | None = None,
    batch: ElementBatch | None = None,
    patches=None,
) -> ConformingField:
    """Apply the patchwise operator to arbitrary broken degree-p data.

    Patch contributions are accumulated in ascending vertex order so the
    result is bitwise deterministic.
    """
    mesh = pi_u.mesh
    p = pi_u.degree
    if space is None:
        space = ConformingSpace(mesh, p)
    if batch is None:
        batch = ElementBatch(mesh)
    if patches is None:
        patches = vertex_patches(mesh)
    out = np.zeros(space.n_dofs)
    for patch in patches:
        ops = PatchOperators(mesh, patch, p, batch)
        local = ops.conforming
        if local.n_dofs == 0:
            continue
        s_free = ops.potential(pi_u.coeffs[patch.elements].ravel())
        for key, li in local.node_index.items():
            gi = space.node_index.get(key)
            # every patch-interior node is an interior node of the mesh
            assert gi is not None, f"patch node {key} missing from global space"
            out[gi] += s_free[li]
    return ConformingField(space, out)


def quasi_interpolate(
    u,
    mesh: Mesh,
    p: int,
    quad_exactness: int | None = None,
    space: ConformingSpace | None = None,
) -> ConformingField:
    """Quasi-interpolation of a function: local-best projection followed by
    the patchwise conforming reconstruction."""
    pi_u = local_best(u, mesh, p, quad_exactness)
    return quasi_interpolate_broken(pi_u, space=space)


def global_best(
    u,
    mesh: Mesh,
    p: int,
    rel_tol: float = 1e-10,
    quad_exactness: int | None = None,
    space: ConformingSpace | None = None,
) -> ConformingField:
    """Minimizer of the H1 seminorm distance to ``u`` over the conforming
    space, solved by preconditioned conjugate gradients."""
    from . import basis as bas

    if quad_exactness is None:
        quad_exactness = 2 * p + 8
    if space is None:
        space = ConformingSpace(mesh, p)
    batch = ElementBatch(mesh)
    if space.n_dofs == 0:
        return ConformingField(space, np.zeros(0))
    stiff = space.assemble_stiffness_sparse(batch)

    rule = bas.quad_rule(quad_exactness)
    pts = batch.quad_points(rule)
    w = batch.quad_weights(rule)
    gu = np.asarray(u.gradient(pts.reshape(-1, 2))).reshape(pts.shape[0], -1, 2)
    grads = batch.monomial_gradients(p, rule)
    rhs_mono = np.einsum("tq,tqd,tqmd->tm", w, gu, grads)
    rhs_nodal = rhs_mono @ space.basis.nodal_to_monomial
    rhs = space.scatter_rhs(rhs_nodal)
    return ConformingField(space, cg_solve(stiff, rhs, rel_tol=rel_tol))


def nodal_interpolant(
    u, mesh: Mesh, p: int, space: ConformingSpace | None = None
) -> ConformingField:
    """Lagrange interpolant at the free nodes (requires a continuous input;
    boundary nodes are zero by the space definition)."""
    if space is None:
        space = ConformingSpace(mesh, p)
    values = np.asarray(u.value(space.node_coords), dtype=float).ravel()
    return ConformingField(space, values)


def write_field_csv(field: ConformingField, stream) -> None:
    """Node coordinates and values, whitespace-separated with a header."""
    stream.write("x y value\n")
    coords = field.space.node_coords
    for (x, y), v in zip(coords, field.values):
        stream.write(f"{x:.12e} {y:.12e} {v:.12e}\n")
