"""Sparse systems, direct solves and small dense utilities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(RuntimeError):
    """Factorization failed or the residual check did not pass."""


@dataclass
class SparseSystem:
    """CSR matrix, right-hand side and optional block sizes."""
    matrix: sp.csr_matrix
    rhs: np.ndarray
    blocks: list[int] = field(default_factory=list)
    block_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        A = sp.csr_matrix(self.matrix)
        A.sum_duplicates()
        A.sort_indices()
        self.matrix = A
        self.rhs = np.asarray(self.rhs, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        if self.rhs.shape[0] != A.shape[0]:
            raise ValueError("rhs length does not match matrix size")
        if self.blocks and sum(self.blocks) != A.shape[0]:
            raise ValueError("block sizes do not add up to the matrix size")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def block_slices(self) -> dict[str, slice]:
        names = self.block_names or [f"block{i}" for i in range(len(self.blocks))]
        out, start = {}, 0
        for name, n in zip(names, self.blocks):
            out[name] = slice(start, start + n)
            start += n
        return out

    def symmetry_defect(self) -> float:
        """max|A - A^T| / max|A|."""
        A = self.matrix
        d = abs(A - A.T)
        scale = abs(A).max()
        return float(d.max() / scale) if scale > 0 else 0.0


def assemble_blocks(blocks, rhs_parts, names=None) -> SparseSystem:
    """SparseSystem from a nested list of sparse blocks (None for zero)."""
    A = sp.bmat(blocks, format="csr")
    rhs = np.concatenate([np.asarray(r, dtype=float) for r in rhs_parts])
    sizes = [len(np.asarray(r)) for r in rhs_parts]
    return SparseSystem(A, rhs, sizes, list(names or []))


def _zero_rows(system: SparseSystem) -> list[str]:
    A = system.matrix
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    where = []
    for name, sl in system.block_slices().items():
        if np.any((empty >= sl.start) & (empty < sl.stop)):
            where.append(name)
    return where


def solve(system: SparseSystem, rtol: float = 1e-10) -> np.ndarray:
    """Sparse LU with COLAMD ordering and partial pivoting, then a residual check.

    The bound checked is ||Ax - b|| <= rtol (||A|| ||x|| + ||b||).
    """
    A = system.matrix.tocsc()
    b = system.rhs
    if A.shape[0] == 0:
        return np.zeros(0)
    bad = _zero_rows(system)
    if bad:
        raise SingularSystemError(f"structurally singular: empty rows in block(s) {', '.join(bad)}")
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        blocks = ", ".join(system.block_slices()) or "matrix"
        raise SingularSystemError(
            f"factorization failed ({exc}); blocks: {blocks}. "
            "If the system is stabilized, try a larger penalty eta.") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution contains non-finite values; consider raising eta")
    r = A @ x - b
    normA = spla.norm(A, np.inf)
    bound = rtol * (normA * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf))
    if np.linalg.norm(r, np.inf) > bound:
        # one step of iterative refinement before giving up
        x = x - lu.solve(r)
        r = A @ x - b
        if np.linalg.norm(r, np.inf) > rtol * (normA * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)):
            raise SingularSystemError(
                f"residual check failed: |r| = {np.linalg.norm(r, np.inf):.3e}; "
                "the matrix is (numerically) singular")
    return x


def relative_residual(system: SparseSystem, x) -> float:
    A, b = system.matrix, system.rhs
    r = np.linalg.norm(A @ x - b, np.inf)
    scale = spla.norm(A, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
    return float(r / scale) if scale > 0 else float(r)


def dense_rank(matrix, tol: float = 1e-10) -> int:
    """Numerical rank via column-pivoted QR, threshold tol * |R_00|."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.size == 0:
        return 0
    R = scipy.linalg.qr(M, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > tol * d[0]))


def null_space(matrix, tol: float = 1e-10) -> np.ndarray:
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    return scipy.linalg.null_space(M, rcond=tol)


def min_eig_sym(matrix) -> float:
    M = np.asarray(matrix.todense() if sp.issparse(matrix) else matrix, dtype=float)
    if M.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def constrained_min_eig(A, C=None, max_size: int = 4000) -> float:
    """Smallest eigenvalue of A restricted to ker C (dense; small systems only)."""
    n = A.shape[0]
    if n > max_size:
        raise ValueError(f"system too large for the dense check ({n} > {max_size})")
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
    if C is not None and C.shape[0] > 0:
        Cd = C.toarray() if sp.issparse(C) else np.asarray(C)
        Z = null_space(Cd)
        Ad = Z.T @ Ad @ Z
    return min_eig_sym(Ad)


def is_positive_definite(A, C=None, max_size: int = 4000) -> bool:
    """Cholesky certificate of A on ker C, scaled against the largest diagonal."""
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if Ad.shape[0] > max_size:
        raise ValueError("system too large for the dense check")
    if C is not None and C.shape[0] > 0:
        Z = null_space(C.toarray() if sp.issparse(C) else C)
        Ad = Z.T @ Ad @ Z
    Ad = 0.5 * (Ad + Ad.T)
    scale = np.max(np.abs(np.diag(Ad))) if Ad.size else 1.0
    try:
        L = np.linalg.cholesky(Ad)
    except np.linalg.LinAlgError:
        return False
    return bool(np.min(np.diag(L)) ** 2 > 1e-12 * scale)


def dump_matrix_market(system: SparseSystem, path) -> None:
    scipy.io.mmwrite(str(path), system.matrix, symmetry="general")
