"""Sparse storage and linear solves.

Thin layer over scipy.sparse: CSR matrices are finalised to sorted,
duplicate-free, zero-free form; solves use SuperLU with a BiCGSTAB+ILU
fallback and always verify the residual contract.
"""
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DIRECT_LIMIT = 200_000


class SolverError(RuntimeError):
    pass


def finalize(A):
    """Canonical CSR: summed duplicates, sorted columns, no stored zeros."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def from_triplets(rows, cols, vals, n):
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n))
    return finalize(A)


def _check_dims(A, x):
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix is not square: {A.shape}")
    if A.shape[1] != len(x):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {len(x)}")


def matvec(A, x):
    x = np.asarray(x, dtype=float)
    _check_dims(A, x)
    return A @ x


def dot(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(x @ y)


def axpy(alpha, x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return alpha * x + y


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r if nb == 0 else r / nb


def solve(A, rhs, rtol=DEFAULT_RTOL, direct_limit=DIRECT_LIMIT):
    """Solve A x = rhs to relative residual ``rtol``."""
    rhs = np.asarray(rhs, dtype=float)
    _check_dims(A, rhs)
    A = sp.csr_matrix(A)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    if A.shape[0] <= direct_limit:
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"sparse LU failed: {exc}") from exc
        x = lu.solve(rhs)
        for _ in range(3):
            res = _relres(A, x, rhs)
            if res <= rtol:
                return x
            x = x + lu.solve(rhs - A @ x)
        res = _relres(A, x, rhs)
        if res <= rtol and np.all(np.isfinite(x)):
            return x
        log.warning("direct solve residual %.3e above %.1e, trying Krylov", res, rtol)
    return _krylov(A, rhs, rtol)


def _krylov(A, rhs, rtol):
    try:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        M = None
    x, info = spla.bicgstab(A, rhs, rtol=rtol * 0.1, atol=0.0, maxiter=5000, M=M)
    res = _relres(A, x, rhs)
    if res > rtol or not np.all(np.isfinite(x)):
        raise SolverError(f"BiCGSTAB did not converge (info={info}), final relative residual {res:.3e}")
    return x
