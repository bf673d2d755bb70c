"""CSR sparse matrices and a preconditioned conjugate gradient solver.

The implicit systems of the schemes (shifted mass plus diffusion) are SPD,
well conditioned under CFL-scaled time steps, and solved with Jacobi-PCG.
Matrices are stored in CSR (scipy backing) and immutable after assembly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class NonConvergenceError(Exception):
    """CG failed to reach the requested tolerance within max_iter."""

    def __init__(self, iterations: int, residual: float, target: float):
        self.iterations = iterations
        self.residual = residual
        self.target = target
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(residual {residual:.3e}, target {target:.3e})")


class SparseMatrix:
    """Immutable square-or-rectangular CSR operator.

    Exposes the raw CSR arrays (``indptr``, ``indices``, ``data``) and thin
    algebra needed by the schemes: matvec, scalar scaling and addition.
    """

    def __init__(self, csr: sp.csr_matrix):
        if not sp.isspmatrix_csr(csr):
            csr = csr.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseMatrix":
        coo = sp.coo_matrix((np.asarray(vals, dtype=float),
                             (np.asarray(rows), np.asarray(cols))), shape=shape)
        return cls(coo.tocsr())

    @classmethod
    def zeros(cls, n: int, m: int | None = None) -> "SparseMatrix":
        return cls(sp.csr_matrix((n, m if m is not None else n)))

    @property
    def shape(self):
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def indptr(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def data(self) -> np.ndarray:
        return self._csr.data

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self._csr.T.tocsr())

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ x

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        return SparseMatrix((self._csr + other._csr).tocsr())

    def __mul__(self, alpha: float) -> "SparseMatrix":
        return SparseMatrix(self._csr * float(alpha))

    __rmul__ = __mul__

    def max_abs_asymmetry(self) -> float:
        """max |A - A^T| entry, for symmetry diagnostics."""
        d = self._csr - self._csr.T
        return float(np.abs(d.data).max()) if d.nnz else 0.0


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product ``A @ x`` with a dimension check."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has shape {x.shape}")
    return A @ x


def cg_solve(A: SparseMatrix, b: np.ndarray, tol_rel: float = 1e-10,
             max_iter: int | None = None, preconditioner: str = "jacobi",
             x0: np.ndarray | None = None):
    """Conjugate gradients for SPD systems.

    Parameters
    ----------
    A : SparseMatrix, symmetric positive definite.
    b : right-hand side.
    tol_rel : stop when ``||b - A x||_2 <= tol_rel * ||b||_2`` (verified on
        the true residual, not only the recursive one).
    max_iter : defaults to ``10 * n + 100``.
    preconditioner : 'none', 'jacobi', or a precomputed inverse-diagonal
        array (equivalent to Jacobi with the diagonal supplied by the
        caller, useful when the same matrix is solved repeatedly).
    x0 : optional warm-start iterate.

    Returns
    -------
    (x, iterations)

    Raises
    ------
    NonConvergenceError
        If the tolerance is not met within ``max_iter`` iterations.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if b.shape != (n,):
        raise ValueError(f"dimension mismatch: A is {A.shape}, b has shape {b.shape}")
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n), 0
    target = tol_rel * norm_b
    if max_iter is None:
        max_iter = 10 * n + 100

    if isinstance(preconditioner, np.ndarray):
        inv_diag = preconditioner
    elif preconditioner == "jacobi":
        d = A.diagonal()
        inv_diag = np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), 1.0)
    elif preconditioner == "none":
        inv_diag = None
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A @ x

    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r))
    if res <= target:
        return x, 0

    for it in range(1, max_iter + 1):
        q = A @ p
        pq = float(p @ q)
        if pq <= 0.0:
            raise NonConvergenceError(it, res, target)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        res = float(np.linalg.norm(r))
        if res <= target:
            true_r = b - A @ x
            res = float(np.linalg.norm(true_r))
            if res <= target:
                return x, it
            r = true_r
        z = r * inv_diag if inv_diag is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    raise NonConvergenceError(max_iter, res, target)
