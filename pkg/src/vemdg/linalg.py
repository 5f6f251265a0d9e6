"""Sparse/dense kernels: symmetric assembly, dense solves, Kronecker slab operators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinAlgError(ValueError):
    pass


def assemble(rows, cols, vals, n: int | None = None, rtol: float = 1e-12) -> sp.csr_matrix:
    """Sum duplicate triplets into a CSR matrix and verify symmetry.

    The reduction is order-independent up to the deterministic sort done by
    scipy, so repeated assembly from the same triplet stream is bit-identical.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if n is None:
        n = int(max(rows.max(initial=-1), cols.max(initial=-1)) + 1)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise LinAlgError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    check_symmetric(A, rtol)
    return A


def check_symmetric(A, rtol: float = 1e-12) -> None:
    D = (A - A.T).tocoo()
    if D.nnz == 0:
        return
    scale = abs(A).max() if A.nnz else 0.0
    worst = int(np.argmax(np.abs(D.data)))
    if abs(D.data[worst]) > rtol * max(scale, np.finfo(float).tiny):
        i, j = int(D.row[worst]), int(D.col[worst])
        raise LinAlgError(
            f"matrix not symmetric: A[{i},{j}] - A[{j},{i}] = {D.data[worst]:.3e} "
            f"(scale {scale:.3e})")


def solve_dense(A, b) -> np.ndarray:
    """LU with partial pivoting; raises on numerical singularity."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise LinAlgError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros_like(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= A.shape[0] * np.finfo(float).eps * pivots.max():
        raise LinAlgError("matrix is singular to working precision")
    return sla.lu_solve((lu, piv), b)


@dataclass(frozen=True)
class KroneckerOperator:
    """Sum of Kronecker products S_i (x) T_i with spatial-major global ordering.

    Global index = spatial_index * (r+1) + temporal_index.
    """

    terms: tuple  # of (spatial sparse matrix, temporal dense matrix)

    def __post_init__(self):
        if not self.terms:
            raise LinAlgError("empty Kronecker operator")
        ns = {S.shape for S, _ in self.terms}
        nt = {np.shape(T) for _, T in self.terms}
        if len(ns) != 1 or len(nt) != 1:
            raise LinAlgError(f"inconsistent factor shapes {ns} / {nt}")
        (n1, n2), = ns
        (m1, m2), = nt
        if n1 != n2 or m1 != m2:
            raise LinAlgError("Kronecker factors must be square")

    @property
    def n_space(self) -> int:
        return self.terms[0][0].shape[0]

    @property
    def n_time(self) -> int:
        return np.shape(self.terms[0][1])[0]

    @property
    def shape(self):
        n = self.n_space * self.n_time
        return (n, n)

    def matmat(self, X: np.ndarray) -> np.ndarray:
        """Apply to a coefficient array X of shape (n_space, n_time)."""
        return sum(S @ X @ np.asarray(T).T for S, T in self.terms)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        X = np.asarray(x).reshape(self.n_space, self.n_time)
        return self.matmat(X).ravel()

    def materialize(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for S, T in self.terms:
            S = S.toarray() if sp.issparse(S) else np.asarray(S)
            out += np.kron(S, np.asarray(T))
        return out


class DenseSlabSolver:
    """Dense LU of the materialized two-term operator M(x)T1 + A(x)T2."""

    def __init__(self, M, A, T1, T2):
        self.op = KroneckerOperator(((M, T1), (A, T2)))
        K = self.op.materialize()
        if K.shape[0]:
            self._lu = sla.lu_factor(K)
            piv = np.abs(np.diag(self._lu[0]))
            if piv.min() <= K.shape[0] * np.finfo(float).eps * piv.max():
                raise LinAlgError("slab operator is singular to working precision")

    def solve(self, R: np.ndarray) -> np.ndarray:
        if R.size == 0:
            return np.zeros_like(R)
        return sla.lu_solve(self._lu, R.ravel()).reshape(R.shape)


class KroneckerSlabSolver:
    """Solve M X T1^T + A X T2^T = R without forming the Kronecker product.

    The temporal pencil (T1^T, T2^T) is reduced by a complex QZ
    decomposition; the transformed system is block upper triangular with
    sparse diagonal blocks a_mm M + b_mm A, each factorized once.
    """

    def __init__(self, M, A, T1, T2):
        self.op = KroneckerOperator(((M, T1), (A, T2)))
        self.M = sp.csc_matrix(M)
        self.A = sp.csc_matrix(A)
        AA, BB, Q, Z = sla.qz(np.asarray(T1, dtype=float).T, np.asarray(T2, dtype=float).T,
                              output="complex")
        self._AA, self._BB, self._Q, self._Z = AA, BB, Q, Z
        n = self.M.shape[0]
        self._lu = []
        for m in range(AA.shape[0]):
            K = (AA[m, m] * self.M + BB[m, m] * self.A).tocsc()
            if n == 0:
                self._lu.append(None)
                continue
            try:
                self._lu.append(spla.splu(K))
            except RuntimeError as exc:
                raise LinAlgError(f"slab operator is singular ({exc})") from None

    def solve(self, R: np.ndarray) -> np.ndarray:
        if R.size == 0:
            return np.zeros_like(R)
        G = R @ self._Z
        n, p = G.shape
        Y = np.zeros((n, p), dtype=complex)
        MY = np.zeros((n, p), dtype=complex)
        AY = np.zeros((n, p), dtype=complex)
        for m in range(p):
            rhs = G[:, m] - MY[:, :m] @ self._AA[:m, m] - AY[:, :m] @ self._BB[:m, m]
            Y[:, m] = self._lu[m].solve(rhs)
            MY[:, m] = self.M @ Y[:, m]
            AY[:, m] = self.A @ Y[:, m]
        return (Y @ self._Q.conj().T).real


def generalized_eigh(A, M):
    """Solve A w = lambda M w by Cholesky reduction to a standard problem.

    Returns ascending eigenvalues and M-orthonormal eigenvectors (columns).
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    try:
        L = sla.cholesky(M, lower=True)
    except sla.LinAlgError as exc:
        raise LinAlgError(f"mass matrix is not SPD ({exc})") from None
    Li_A = sla.solve_triangular(L, A, lower=True)
    C = sla.solve_triangular(L, Li_A.T, lower=True).T
    C = 0.5 * (C + C.T)
    lam, V = sla.eigh(C)
    W = sla.solve_triangular(L.T, V, lower=False)
    return lam, W


def write_matrix_market(A, path) -> None:
    """Coordinate-format dump for debugging."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(A), symmetry="general")
