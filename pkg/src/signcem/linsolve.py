"""Direct solvers for the (possibly indefinite) systems of the method.

Small dense symmetric matrices go through a Bunch-Kaufman LDL^T, which also
yields the inertia. Sparse matrices go through SuperLU with a fill-reducing
column ordering; inertia is not available on that path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SparseSymMatrix
from .errors import ConfigurationError, SingularMatrixError

__all__ = ["Factorization", "factor", "solve"]

PIVOT_RTOL = 1e-14
DENSE_MAX = 5000


@dataclass(frozen=True, eq=False)
class Factorization:
    n: int
    method: str
    inertia: tuple[int, int, int] | None
    perm: np.ndarray | None
    _data: Any
    min_pivot: float | None = None  # smallest |pivot| / ||A||, a cheap conditioning hint

    def solve(self, b):
        return solve(self, b)


def _norm(A):
    if sp.issparse(A):
        return float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
    return float(np.abs(A).sum(axis=1).max()) if A.size else 0.0


def _dense_ldl(A: np.ndarray, anorm: float) -> Factorization:
    lu, d, perm = la.ldl(A, lower=True, hermitian=True)
    n = A.shape[0]
    pos = neg = zero = 0
    smallest = np.inf
    k = 0
    while k < n:
        if k + 1 < n and d[k + 1, k] != 0.0:
            ev = np.linalg.eigvalsh(d[k:k + 2, k:k + 2])
            step = 2
        else:
            ev = np.array([d[k, k]])
            step = 1
        for e in ev:
            smallest = min(smallest, abs(e))
            if abs(e) <= PIVOT_RTOL * anorm:
                raise SingularMatrixError(
                    f"numerically zero pivot {e:.3e} at index {k} (|A|={anorm:.3e})", pivot_index=k)
            pos += e > 0
            neg += e < 0
        k += step
    # lu[perm] is unit lower triangular and d lives in the permuted frame
    return Factorization(n, "dense-ldl", (int(pos), int(neg), zero), perm,
                         (lu[perm], spla.splu(sp.csc_matrix(d))), smallest / anorm)


def factor(A, symmetric: bool | None = None, ordering: str | None = None) -> Factorization:
    """Factor a square matrix.

    ``A`` may be a :class:`SparseSymMatrix`, a scipy sparse matrix or a
    dense array. Dense symmetric input of size <= DENSE_MAX uses LDL^T.
    ``ordering`` overrides the SuperLU column ordering; the default is
    minimum degree on A^T + A for symmetric input and COLAMD otherwise.
    """
    if isinstance(A, SparseSymMatrix):
        A = A.matrix
        symmetric = True if symmetric is None else symmetric
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"matrix must be square, got {A.shape}")
    n = A.shape[0]
    anorm = _norm(A)
    if n == 0:
        return Factorization(0, "empty", (0, 0, 0), None, None)
    if anorm == 0.0:
        raise SingularMatrixError("zero matrix", pivot_index=0)
    if symmetric is None:
        symmetric = _norm(A - A.T) <= 1e-12 * anorm
    if not sp.issparse(A):
        A = np.asarray(A, dtype=np.float64)
        if symmetric and n <= DENSE_MAX:
            return _dense_ldl(A, anorm)
        lu, piv = la.lu_factor(A, check_finite=True)
        diag = np.abs(np.diag(lu))
        bad = np.flatnonzero(diag <= PIVOT_RTOL * anorm)
        if bad.size:
            raise SingularMatrixError(
                f"numerically zero pivot {diag[bad[0]]:.3e} at index {bad[0]}",
                pivot_index=int(bad[0]))
        return Factorization(n, "dense-lu", None, piv, (lu, piv), float(diag.min()) / anorm)
    M = sp.csc_matrix(A, dtype=np.float64)
    spec = ordering or ("MMD_AT_PLUS_A" if symmetric else "COLAMD")
    try:
        lu = spla.splu(M, permc_spec=spec)
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(diag <= PIVOT_RTOL * anorm)
    if bad.size:
        raise SingularMatrixError(
            f"numerically zero pivot {diag[bad[0]]:.3e} at index {bad[0]} (|A|={anorm:.3e})",
            pivot_index=int(bad[0]))
    return Factorization(n, "sparse-lu", None, lu.perm_c.copy(), lu, float(diag.min()) / anorm)


def solve(F: Factorization, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != F.n:
        raise ConfigurationError(f"rhs has {b.shape[0]} rows, factorization has {F.n}")
    if F.n == 0:
        return b.copy()
    if F.method == "sparse-lu":
        return F._data.solve(b)
    if F.method == "dense-lu":
        return la.lu_solve(F._data, b)
    L, dlu = F._data
    perm = F.perm
    y = la.solve_triangular(L, b[perm], lower=True, unit_diagonal=True)
    z = dlu.solve(y)
    w = la.solve_triangular(L.T, z, lower=False, unit_diagonal=True)
    x = np.empty_like(w)
    x[perm] = w
    return x
