"""Dense small-matrix linear algebra.

Matrices and vectors are plain ``numpy.ndarray`` values (2-D and 1-D, float64).
Products, transposes and norms defer to numpy; the factorizations that the
recalibration relies on (LU with partial pivoting, cyclic Jacobi
eigendecomposition) are written out here because their tolerances and failure
modes are part of the contract.

Every function is pure: inputs are never modified.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, NoConvergence, NonFiniteError, SingularMatrix

#: Relative pivot floor for elimination: |pivot| must exceed this times ||m||_inf.
PIVOT_TOL = 1e-12
#: Jacobi stops once the off-diagonal Frobenius norm is below this times ||m||_F.
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
#: Inputs to sym_eig may deviate from symmetry by this much (relative) before rejection.
SYMMETRY_TOL = 1e-9


class SymEig(NamedTuple):
    """Eigenvalues in ascending order and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.ndim != 1 or a.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return a


def _square(m, name="matrix") -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(m) -> np.ndarray:
    return as_matrix(m).T.copy()


def add(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(m, s: float) -> np.ndarray:
    return float(s) * as_matrix(m)


def trace(m) -> float:
    return float(np.trace(_square(m)))


def frobenius_norm(m) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=float)))))


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def symmetrize(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    return 0.5 * (a + a.T)


def lu_factor(m, pivot_tol: float = PIVOT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Doolittle LU with partial pivoting.

    Returns ``(lu, perm)`` where ``lu`` packs the unit-lower and upper factors and
    ``perm`` is the row permutation, so that ``m[perm] == L @ U``.
    """
    lu = _square(m).copy()
    n = lu.shape[0]
    scale_inf = float(np.max(np.sum(np.abs(lu), axis=1)))
    floor = pivot_tol * scale_inf
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= floor or lu[p, k] == 0.0:
            raise SingularMatrix(
                f"pivot {abs(lu[p, k]):.3e} at column {k} is below {floor:.3e}"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def lu_solve(lu: np.ndarray, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = np.array(rhs, dtype=float)[perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def solve_linear(a, rhs, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Solve ``a @ x = rhs`` for a vector or matrix right-hand side."""
    a = _square(a, "a")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim not in (1, 2) or rhs.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs shape {rhs.shape} does not match {a.shape}")
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteError("rhs has non-finite entries")
    lu, perm = lu_factor(a, pivot_tol)
    return lu_solve(lu, perm, rhs)


def inverse(m, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    m = _square(m)
    return solve_linear(m, np.eye(m.shape[0]), pivot_tol)


def _off_norm(a: list) -> float:
    n = len(a)
    return math.sqrt(sum(a[i][j] * a[i][j] for i in range(n) for j in range(n) if i != j))


def _rotate(a: list, v: list, p: int, q: int, c: float, s: float) -> None:
    # a <- R^T a R and v <- v R for the plane rotation R acting on (p, q)
    for row in a:
        x, y = row[p], row[q]
        row[p], row[q] = c * x - s * y, s * x + c * y
    rp, rq = a[p], a[q]
    for k in range(len(rp)):
        x, y = rp[k], rq[k]
        rp[k], rq[k] = c * x - s * y, s * x + c * y
    rp[q] = rq[p] = 0.0
    for row in v:
        x, y = row[p], row[q]
        row[p], row[q] = c * x - s * y, s * x + c * y


def sym_eig(m, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = JACOBI_TOL) -> SymEig:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Works on nested Python lists: for the K <= 16 matrices seen here this beats
    per-rotation numpy slicing by a wide margin.
    """
    m = _square(m)
    norm = frobenius_norm(m)
    if frobenius_norm(m - m.T) > SYMMETRY_TOL * max(norm, np.finfo(float).tiny):
        raise DimensionError("sym_eig requires a symmetric matrix")
    a = symmetrize(m).tolist()
    n = len(a)
    v = np.eye(n).tolist()
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                app, aqq = a[p][p], a[q][q]
                # negligible next to both diagonal entries: drop it instead of rotating
                if abs(app) + 100.0 * abs(apq) == abs(app) and abs(aqq) + 100.0 * abs(apq) == abs(aqq):
                    a[p][q] = a[q][p] = 0.0
                    continue
                tau = (aqq - app) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                _rotate(a, v, p, q, c, t * c)
                rotated = True
        if not rotated:
            break
    # sweeping runs to working precision; the contract only demands tol * ||m||_F
    if _off_norm(a) > tol * norm:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    diag = np.array([a[i][i] for i in range(n)])
    order = np.argsort(diag, kind="stable")
    return SymEig(diag[order], np.array(v)[:, order])


def min_eigenvalue(m) -> float:
    return float(sym_eig(m).eigenvalues[0])
