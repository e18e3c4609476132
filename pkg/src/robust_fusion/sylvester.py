"""Structured Sylvester solver for ``A W + W B = B``.

``A`` is symmetric positive semi-definite and ``B`` symmetric positive
definite, which is exactly the shape of the stationarity condition of the
regularized Jacobian loss. Both operands are diagonalized once and the
equation decouples entrywise in the joint eigenbasis, so the cost is that of a
couple of K x K eigendecompositions.

The Kronecker route (a K^2 x K^2 linear system) is kept as an independent
oracle for testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import DegenerateSpectrum, DimensionError

#: Smallest admissible lambda_i + mu_j; below it the solution is not unique in floating point.
SPECTRUM_FLOOR = 1e-12
OPERAND_TOL = 1e-9
KRONECKER_MAX_K = 16


@dataclass(frozen=True)
class SylvesterOperands:
    """Operands of ``A W + W B = B``.

    ``a`` is ``kappa * J @ J`` and ``b`` is ``inv(W_head @ W_head.T)``; ``kappa`` is
    carried along for diagnostics and for the trace identity.
    """

    a: np.ndarray
    b: np.ndarray
    kappa: float = 0.0

    def __post_init__(self):
        a = tensor.as_matrix(self.a, "a")
        b = tensor.as_matrix(self.b, "b")
        if a.shape != b.shape or a.shape[0] != a.shape[1]:
            raise DimensionError(f"operand shapes differ or are not square: {a.shape}, {b.shape}")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        na, nb = tensor.frobenius_norm(a), tensor.frobenius_norm(b)
        if tensor.frobenius_norm(a - a.T) > OPERAND_TOL * max(na, 1.0):
            raise ValueError("operand a is not symmetric")
        if tensor.frobenius_norm(b - b.T) > OPERAND_TOL * max(nb, 1.0):
            raise ValueError("operand b is not symmetric")
        object.__setattr__(self, "a", tensor.symmetrize(a))
        object.__setattr__(self, "b", tensor.symmetrize(b))

    @property
    def k(self) -> int:
        return self.a.shape[0]

    def validate_spectra(self) -> None:
        """Check that ``a`` is PSD and ``b`` is PD (raises ``ValueError``)."""
        lam_a = tensor.min_eigenvalue(self.a)
        if lam_a < -OPERAND_TOL * tensor.frobenius_norm(self.a):
            raise ValueError(f"operand a is not PSD (min eigenvalue {lam_a:.3e})")
        lam_b = tensor.min_eigenvalue(self.b)
        if lam_b <= SPECTRUM_FLOOR * tensor.frobenius_norm(self.b):
            raise ValueError(f"operand b is not PD (min eigenvalue {lam_b:.3e})")


def solve_structured(ops: SylvesterOperands, b_eig: tensor.SymEig | None = None) -> np.ndarray:
    """Solve ``A W + W B = B`` through the eigendecompositions of ``A`` and ``B``.

    With ``A = U diag(lam) U^T`` and ``B = V diag(mu) V^T`` the transformed unknown
    ``Y = U^T W V`` satisfies ``Y_ij (lam_i + mu_j) = (U^T V)_ij mu_j``. Pass
    ``b_eig`` to reuse a decomposition of ``B`` across many solves.
    """
    lam, u = tensor.sym_eig(ops.a)
    mu, v = b_eig if b_eig is not None else tensor.sym_eig(ops.b)
    denom = lam[:, None] + mu[None, :]
    worst = float(np.min(denom))
    if worst <= SPECTRUM_FLOOR:
        raise DegenerateSpectrum(f"eigenvalue sum {worst:.3e} at or below {SPECTRUM_FLOOR}")
    # U^T B V = (U^T V) diag(mu); using mu directly avoids re-rounding a badly scaled B
    return u @ ((u.T @ v) * (mu[None, :] / denom)) @ v.T


def solve_kronecker_oracle(ops: SylvesterOperands) -> np.ndarray:
    """Brute-force solve of ``(I kron A + B^T kron I) vec(W) = vec(B)``.

    ``vec`` stacks columns. Only meant for small ``K`` (the system is K^2 x K^2).
    """
    k = ops.k
    if k > KRONECKER_MAX_K:
        raise DimensionError(f"oracle limited to K <= {KRONECKER_MAX_K}, got {k}")
    eye = np.eye(k)
    system = tensor.kron(eye, ops.a) + tensor.kron(ops.b.T, eye)
    vec_w = tensor.solve_linear(system, ops.b.reshape(-1, order="F"))
    return vec_w.reshape((k, k), order="F")


def residual(ops: SylvesterOperands, w) -> float:
    w = np.asarray(w, dtype=float)
    return tensor.frobenius_norm(ops.a @ w + w @ ops.b - ops.b)


def relative_residual(ops: SylvesterOperands, w) -> float:
    return residual(ops, w) / (tensor.frobenius_norm(ops.a) + tensor.frobenius_norm(ops.b))


def kronecker_condition(ops: SylvesterOperands) -> float:
    """2-norm condition number of the vectorized Sylvester operator.

    The operator is symmetric here, with eigenvalues ``lam_i + mu_j``.
    """
    lam = tensor.sym_eig(ops.a).eigenvalues
    mu = tensor.sym_eig(ops.b).eigenvalues
    sums = np.abs(lam[:, None] + mu[None, :])
    return float(np.max(sums) / np.min(sums))
