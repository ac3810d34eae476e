"""Dense factorizations, a preconditioned CG solver, and a symmetric
generalized eigensolver tolerant of a shared kernel.

Factorizations are delegated to LAPACK through scipy; the kernel-deflation
logic for the generalized eigenproblem is implemented here because the pencil
arising from the patch problems is singular by construction (both quadratic
forms vanish on the same subspace) and must never be inverted directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse


class NotSPDError(ValueError):
    pass


class SingularMatrixError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnboundedQuotientError(ValueError):
    """The left form does not vanish on the kernel of the right form; the
    quotient is unbounded, which signals an assembly bug upstream."""


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive definite system."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(a, "matrix")
    _check_finite(b, "rhs")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotSPDError(f"matrix is not SPD: {exc}") from None
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a general square system with partial pivoting."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(a, "matrix")
    _check_finite(b, "rhs")
    with warnings.catch_warnings():
        # singularity is detected by the explicit pivot check below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    tol = 1e-14 * max(np.abs(a).max(), 1.0)
    if pivots.min(initial=np.inf) <= tol:
        raise SingularMatrixError(
            f"matrix numerically singular (pivot {pivots.min():.2e} <= {tol:.2e})"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def cg_solve(
    a,
    b: np.ndarray,
    rel_tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for a sparse SPD system.

    ``a`` is a scipy sparse matrix (or anything with ``@`` and ``diagonal``).
    Raises ConvergenceError (carrying the final residual) after 10 * dim
    iterations without reaching ||A x - b|| <= rel_tol ||b||.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    diag = np.asarray(a.diagonal()).ravel()
    if np.any(diag <= 0):
        raise NotSPDError("nonpositive diagonal entry; matrix is not SPD")
    inv_diag = 1.0 / diag
    x = np.zeros(n)
    r = b.copy()
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= rel_tol * norm_b:
            return x
        ap = a @ p
        pap = p @ ap
        if pap <= 0:
            raise NotSPDError("nonpositive curvature encountered; matrix not SPD")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(a @ x - b)
    if res <= rel_tol * norm_b:
        return x
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations "
        f"(residual {res:.3e}, target {rel_tol * norm_b:.3e})",
        residual=res,
    )


@dataclass
class EigDiagnostics:
    n_total: int
    n_kernel: int
    kernel_threshold: float
    max_eig_b: float
    kernel_residual: float = 0.0
    spectrum: np.ndarray = field(default=None)  # type: ignore[assignment]


def gen_eig_max(
    a: np.ndarray,
    b: np.ndarray,
    kernel_rel_tol: float = 1e-10,
    kernel_check_tol: float = 1e-6,
) -> tuple[float, EigDiagnostics]:
    """Largest eigenvalue of the pencil A v = mu B v for symmetric PSD A, B
    sharing a kernel.

    The kernel of B is deflated explicitly: eigen-directions of B below
    ``kernel_rel_tol * max_eig(B)`` are discarded after verifying that A also
    (numerically) vanishes there; the reduced problem on the retained subspace
    is solved densely.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(a, "A")
    _check_finite(b, "B")
    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)
    w, v = np.linalg.eigh(b)
    max_eig_b = max(w.max(initial=0.0), 0.0)
    if max_eig_b == 0.0:
        raise UnboundedQuotientError("B is identically zero")
    threshold = kernel_rel_tol * max_eig_b
    keep = w > threshold
    n_kernel = int((~keep).sum())
    scale_a = max(np.abs(a).max(), 1e-300)
    kernel_residual = 0.0
    if n_kernel:
        kern = v[:, ~keep]
        kernel_residual = float(np.linalg.norm(a @ kern, axis=0).max()) / scale_a
        if kernel_residual > kernel_check_tol:
            raise UnboundedQuotientError(
                "quotient unbounded: A does not vanish on ker(B) "
                f"(relative residual {kernel_residual:.2e})"
            )
    vk = v[:, keep]
    s = 1.0 / np.sqrt(w[keep])
    reduced = (s[:, None] * (vk.T @ a @ vk)) * s[None, :]
    reduced = 0.5 * (reduced + reduced.T)
    spectrum = np.linalg.eigvalsh(reduced)
    mu_max = float(spectrum[-1])
    diag = EigDiagnostics(
        n_total=b.shape[0],
        n_kernel=n_kernel,
        kernel_threshold=threshold,
        max_eig_b=max_eig_b,
        kernel_residual=kernel_residual,
        spectrum=spectrum,
    )
    return mu_max, diag
