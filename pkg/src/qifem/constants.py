"""Certified constants of the quasi-interpolation error bounds: the patch
geometry constant rho_a, the primal-dual patch constant lambda_a obtained from
a small generalized eigenproblem, and their per-element / global aggregates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import ElementBatch
from .linalg import EigDiagnostics, gen_eig_max
from .mesh import Mesh, VertexPatch, element_geometry, vertex_patches
from .reconstruct import PatchOperators


@dataclass(frozen=True)
class CertifiedConstants:
    """Fully computable constants attached to one mesh and degree."""

    degree: int
    rho: np.ndarray  # (n_vertices,) patch geometry constants
    lam: np.ndarray  # (n_vertices,) patch eigenvalue constants
    c_element: np.ndarray  # (n_triangles,) max of rho*lam over element vertices
    c_omega: float  # global max of rho*lam

    def __post_init__(self):
        assert np.all(self.rho >= 1.0 + 1.0 / math.pi - 1e-12)
        assert np.all(self.lam >= 0.0)
        assert abs(self.c_omega - self.c_element.max(initial=0.0)) <= 1e-12


@dataclass
class EigenAssembly:
    """Matrices of the patch eigenproblem: D maps broken coefficients to the
    reconstruction defect, R to the flux coefficients; K and M are the broken
    gradient Gram and the flux mass matrices."""

    d: np.ndarray
    r: np.ndarray
    k: np.ndarray
    m: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return self.d.T @ self.k @ self.d

    @property
    def b(self) -> np.ndarray:
        return self.r.T @ self.m @ self.r


def rho_a(mesh: Mesh, patch: VertexPatch) -> float:
    """1 + (1/pi) * max over patch elements of (element diameter) / (distance
    from the patch center vertex to the opposite edge)."""
    worst = 0.0
    for t, lv in zip(patch.elements, patch.local_vertex):
        geom = element_geometry(mesh, int(t))
        worst = max(worst, geom.h / geom.tau[int(lv)])
    return 1.0 + worst / math.pi


def eigen_assembly(ops: PatchOperators) -> EigenAssembly:
    return EigenAssembly(
        d=ops.defect_matrix,
        r=ops.flux_matrix,
        k=ops.broken_gram,
        m=ops.flux_mass,
    )


def lambda_a(
    ops: PatchOperators,
    kernel_rel_tol: float = 1e-10,
    kernel_check_tol: float = 1e-6,
) -> tuple[float, EigDiagnostics]:
    """Largest ratio of defect H1 seminorm to flux L2 norm over all broken
    data on the patch: square root of the top pencil eigenvalue."""
    asm = eigen_assembly(ops)
    mu_max, diag = gen_eig_max(
        asm.a, asm.b, kernel_rel_tol=kernel_rel_tol, kernel_check_tol=kernel_check_tol
    )
    return math.sqrt(max(mu_max, 0.0)), diag


def aggregate(mesh: Mesh, rho: np.ndarray, lam: np.ndarray, degree: int) -> CertifiedConstants:
    """Per-element and global maxima of rho_a * lambda_a."""
    rho = np.asarray(rho, dtype=float)
    lam = np.asarray(lam, dtype=float)
    per_vertex = rho * lam
    c_element = per_vertex[mesh.triangles].max(axis=1)
    return CertifiedConstants(
        degree=degree,
        rho=rho,
        lam=lam,
        c_element=c_element,
        c_omega=float(c_element.max(initial=0.0)),
    )


def compute_constants(
    mesh: Mesh,
    degree: int,
    batch: ElementBatch | None = None,
    patches: list[VertexPatch] | None = None,
) -> CertifiedConstants:
    """Assemble and solve every patch eigenproblem on the mesh."""
    if batch is None:
        batch = ElementBatch(mesh)
    if patches is None:
        patches = vertex_patches(mesh)
    rho = np.empty(mesh.n_vertices)
    lam = np.empty(mesh.n_vertices)
    for patch in patches:
        ops = PatchOperators(mesh, patch, degree, batch)
        rho[patch.center] = rho_a(mesh, patch)
        lam[patch.center], _ = lambda_a(ops)
    return aggregate(mesh, rho, lam, degree)


def local_best_factor(s: int, h: float) -> float:
    """Explicit factor sqrt((s+1)!) * (h/pi)^s multiplying the H^{1+s}
    seminorm in the local-best error bound."""
    if s < 0 or int(s) != s:
        raise ValueError("regularity index s must be a nonnegative integer")
    return math.sqrt(math.factorial(s + 1)) * (h / math.pi) ** s


def write_constants_report(mesh: Mesh, consts: CertifiedConstants, stream) -> None:
    """One row per vertex: id, boundary flag, rho_a, lambda_a, rho_a*lambda_a."""
    stream.write("vertex boundary rho lambda rho_lambda\n")
    for v in range(mesh.n_vertices):
        stream.write(
            f"{v} {int(mesh.boundary_vertex[v])} "
            f"{consts.rho[v]:.12e} {consts.lam[v]:.12e} "
            f"{consts.rho[v] * consts.lam[v]:.12e}\n"
        )
