"""Coefficient fields, P1 stiffness assembly and the SPD solve."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .grid import Mesh


def _symmetric_part_min_eig(mats):
    sym = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    return np.linalg.eigvalsh(sym)[:, 0]


def check_ellipticity(A: "CoefficientField | np.ndarray") -> tuple[float, float]:
    """Best constants (alpha, beta) with A in M(alpha, beta).

    alpha is the smallest eigenvalue of the symmetric part of A over all
    elements; beta is the reciprocal of the smallest eigenvalue of the
    symmetric part of A^{-1}.
    """
    mats = A.matrices if isinstance(A, CoefficientField) else np.asarray(A, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    if not np.all(np.isfinite(mats)):
        raise ValueError("coefficient matrices must be finite")
    lo = _symmetric_part_min_eig(mats)
    if np.any(lo <= 0.0):
        raise ValueError("not coercive")
    inv_lo = _symmetric_part_min_eig(np.linalg.inv(mats))
    if np.any(inv_lo <= 0.0):
        raise ValueError("not coercive")
    return float(lo.min()), float(1.0 / inv_lo.min())


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Element-wise constant matrix field with certified ellipticity bounds."""

    mesh: Mesh
    matrices: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        d = self.mesh.dim
        if mats.shape != (self.mesh.num_elements, d, d):
            raise ValueError(f"expected matrices of shape {(self.mesh.num_elements, d, d)}")
        alpha, beta = check_ellipticity(mats)
        tol = 1e-12 * max(1.0, beta)
        if self.alpha > alpha + tol or self.beta < beta - tol or self.alpha > self.beta:
            raise ValueError(
                f"bounds ({self.alpha}, {self.beta}) do not certify computed ({alpha}, {beta})"
            )
        mats.flags.writeable = False
        object.__setattr__(self, "matrices", mats)

    @classmethod
    def from_matrices(cls, mesh, matrices, alpha=None, beta=None):
        a, b = check_ellipticity(np.asarray(matrices, dtype=float))
        return cls(mesh, matrices, a if alpha is None else alpha, b if beta is None else beta)

    @classmethod
    def constant(cls, mesh, value):
        m = np.asarray(value, dtype=float)
        if m.ndim == 0:
            m = m * np.eye(mesh.dim)
        return cls.from_matrices(mesh, np.broadcast_to(m, (mesh.num_elements, mesh.dim, mesh.dim)))

    @classmethod
    def identity(cls, mesh):
        return cls.constant(mesh, 1.0)

    @classmethod
    def scalar(cls, mesh, values, alpha=None, beta=None):
        values = np.asarray(values, dtype=float).reshape(-1)
        mats = values[:, None, None] * np.eye(mesh.dim)[None]
        return cls.from_matrices(mesh, mats, alpha, beta)

    @classmethod
    def from_function(cls, mesh, fn: Callable):
        """Sample ``fn(*midpoint_coords)`` (scalar or dim x dim) at element midpoints."""
        vals = np.asarray(fn(*mesh.coordinates(mesh.midpoints)), dtype=float)
        if vals.ndim <= 1:
            return cls.scalar(mesh, np.broadcast_to(vals, (mesh.num_elements,)))
        return cls.from_matrices(mesh, vals)

    @property
    def is_symmetric(self):
        return bool(np.allclose(self.matrices, np.swapaxes(self.matrices, 1, 2), rtol=0, atol=1e-14))

    @property
    def is_scalar(self):
        d = self.mesh.dim
        diag = self.matrices[:, np.arange(d), np.arange(d)]
        off = self.matrices - diag[:, :, None] * np.eye(d)[None]
        return bool(np.all(off == 0.0) and np.all(diag == diag[:, :1]))


@dataclass(frozen=True, eq=False)
class SparseSpdOperator:
    """Stiffness matrix restricted to interior unknowns."""

    mesh: Mesh
    matrix: sp.csr_matrix
    symmetric: bool

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def diagonal(self):
        return self.matrix.diagonal()

    def energy(self, u):
        return float(u @ (self.matrix @ u))

    def toarray(self):
        return self.matrix.toarray()


def _assemble_full(mesh: Mesh, A: CoefficientField) -> sp.csr_matrix:
    g = mesh.gradients
    flux = np.einsum("eij,elj->eli", A.matrices, g)  # A grad(phi_l)
    local = mesh.volumes[:, None, None] * np.einsum("eli,eki->ekl", flux, g)
    el = mesh.elements
    rows = np.repeat(el, el.shape[1], axis=1).ravel()
    cols = np.tile(el, (1, el.shape[1])).ravel()
    nv = mesh.num_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


def assemble_stiffness(mesh: Mesh, A: CoefficientField | None = None) -> SparseSpdOperator:
    """K[i, j] = int A grad(phi_j) . grad(phi_i) over interior basis functions."""
    A = CoefficientField.identity(mesh) if A is None else A
    if A.mesh != mesh:
        raise ValueError("coefficient field lives on a different mesh")
    full = _assemble_full(mesh, A)
    inner = mesh.interior
    K = full[inner][:, inner].tocsr()
    K.sum_duplicates()
    K.eliminate_zeros()
    symmetric = A.is_symmetric
    if symmetric:
        K = (0.5 * (K + K.T)).tocsr()  # exact symmetry
    return SparseSpdOperator(mesh, K, symmetric)


def assemble_full_stiffness(mesh: Mesh, A: CoefficientField | None = None) -> sp.csr_matrix:
    """Stiffness over all vertices, boundary rows included (used for lifting)."""
    A = CoefficientField.identity(mesh) if A is None else A
    return _assemble_full(mesh, A)


def assemble_lumped_mass(mesh: Mesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix, int phi_i dx, for every vertex."""
    share = mesh.volumes / (mesh.dim + 1)
    return np.bincount(
        mesh.elements.ravel(), np.repeat(share, mesh.dim + 1), minlength=mesh.num_vertices
    )


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix over interior unknowns."""
    d = mesh.dim
    ref = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    local = mesh.volumes[:, None, None] * ref[None]
    el = mesh.elements
    rows = np.repeat(el, d + 1, axis=1).ravel()
    cols = np.tile(el, (1, d + 1)).ravel()
    nv = mesh.num_vertices
    full = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    inner = mesh.interior
    return full[inner][:, inner].tocsr()


def _as_matrix(K):
    if isinstance(K, SparseSpdOperator):
        return K.matrix
    if sp.issparse(K):
        return K.tocsr()
    return sp.csr_matrix(np.atleast_2d(np.asarray(K, dtype=float)))


def conjugate_gradient(K, b, rel_tol=1e-12, maxiter=None):
    """Jacobi-preconditioned CG from a zero initial guess.

    Returns ``(x, iterations)``.  Stops when ||b - Kx|| <= rel_tol ||b||.
    """
    M = _as_matrix(K)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("invalid load")
    n = b.size
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0
    maxiter = 50 * n if maxiter is None else maxiter
    dinv = 1.0 / M.diagonal()
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    target = rel_tol * bnorm
    for it in range(1, maxiter + 1):
        Ap = M @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        if np.linalg.norm(r) <= target:
            return x, it
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        "CG stagnation", {"iterations": maxiter, "relative_residual": np.linalg.norm(r) / bnorm}
    )


def solve_spd(K, b, rel_tol=1e-12) -> np.ndarray:
    """Solve K x = b for symmetric positive definite K by Jacobi-PCG."""
    return conjugate_gradient(K, b, rel_tol)[0]


def solve_linear(K: SparseSpdOperator, b, rel_tol=1e-12) -> np.ndarray:
    """PCG for symmetric operators, sparse LU otherwise."""
    if K.symmetric:
        return solve_spd(K, b, rel_tol)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("invalid load")
    return spla.spsolve(K.matrix.tocsc(), b)
