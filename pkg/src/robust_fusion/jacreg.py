"""Per-sample Jacobian-regularized recalibration of late-fusion predictions.

For one test sample the fused prediction is ``softmax(W_a z_A + W_b z_B - log freq)``.
``W_a`` is chosen to minimize

    (1 - gamma) * ||J W_a W_A||_F^2 + gamma * ||W_a - I||_F^2

where ``J = p p^T - Diag(p)`` is evaluated at the current prediction and ``W_A`` is
the weight of modality A's last linear layer. Setting the gradient to zero gives
``A W_a + W_a B = B`` with ``A = kappa J^2``, ``B = inv(W_A W_A^T)`` and
``kappa = 1/gamma - 1``, solved by :func:`robust_fusion.sylvester.solve_structured`.

Note on sign: ``J`` here is the negative of the usual softmax derivative
``Diag(p) - p p^T``. Every objective below only sees ``J`` through Frobenius norms
or ``J^2``, so the sign is immaterial there, but code that uses ``J`` as a
derivative must negate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import fusion, tensor
from .errors import DimensionError, DomainError
from .sylvester import SylvesterOperands, solve_structured

#: ``W W^T`` closer than this (Frobenius) to the identity takes the direct-inverse path.
ORTHONORMAL_TOL = 1e-9
FLIP_MARGIN = 1e-9
FEASIBILITY_TOL = 1e-10


@dataclass(frozen=True)
class FusionConfig:
    gamma: float
    t_max: int = 1
    regularize_a: bool = True
    regularize_b: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")

    @property
    def kappa(self) -> float:
        return kappa_of(self.gamma)


@dataclass(frozen=True)
class UnimodalHead:
    """Last linear layer ``z = w @ h + b`` of a trained unimodal classifier."""

    w: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        w = tensor.as_matrix(self.w, "w")
        b = tensor.as_vector(self.b, "b")
        if b.shape[0] != w.shape[0]:
            raise DimensionError(f"bias length {b.shape[0]} != {w.shape[0]} classes")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def k(self) -> int:
        return self.w.shape[0]

    def logits(self, h) -> np.ndarray:
        return self.w @ np.asarray(h, dtype=float) + self.b

    @cached_property
    def gram(self) -> np.ndarray:
        return tensor.symmetrize(self.w @ self.w.T)

    @cached_property
    def gram_inverse(self) -> np.ndarray:
        """``inv(W W^T)``; raises ``SingularMatrix`` when W lacks full row rank."""
        return tensor.symmetrize(tensor.inverse(self.gram))

    @cached_property
    def gram_inverse_eig(self) -> tensor.SymEig:
        return tensor.sym_eig(self.gram_inverse)

    @cached_property
    def is_orthonormal(self) -> bool:
        return tensor.frobenius_norm(self.gram - np.eye(self.k)) <= ORTHONORMAL_TOL


def identity_head(k: int, name: str = "identity") -> UnimodalHead:
    return UnimodalHead(np.eye(k), np.zeros(k), name)


@dataclass
class RecalibrationResult:
    p_prime: np.ndarray
    w_a: np.ndarray
    w_b: np.ndarray
    jac_norm_sq_a: float
    jac_norm_sq_b: float
    bound: float
    iterations: int
    gamma: float = field(default=1.0)

    @property
    def jac_norm_sq(self) -> float:
        """Largest ``||J W_m W_M||_F^2`` over the regularized modalities."""
        return max(self.jac_norm_sq_a, self.jac_norm_sq_b)


def kappa_of(gamma: float) -> float:
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    return 1.0 / gamma - 1.0


def softmax_jacobian(p) -> np.ndarray:
    p = fusion.check_prediction(p)
    if p.ndim != 1:
        raise DimensionError("softmax_jacobian takes a single prediction vector")
    return np.outer(p, p) - np.diag(p)


def build_operands(j, head: UnimodalHead, gamma: float) -> SylvesterOperands:
    j = tensor.as_matrix(j, "j")
    if j.shape != (head.k, head.k):
        raise DimensionError(f"J is {j.shape}, head has {head.k} classes")
    kappa = kappa_of(gamma)
    return SylvesterOperands(kappa * tensor.symmetrize(j @ j), head.gram_inverse, kappa)


def solve_recalibration(j, head: UnimodalHead, gamma: float) -> np.ndarray:
    """Minimizer of the relaxed loss for fixed ``J``."""
    if gamma == 1.0:
        return np.eye(head.k)
    return solve_structured(build_operands(j, head, gamma), head.gram_inverse_eig)


def relaxed_loss(j, w_a, head: UnimodalHead, gamma: float) -> float:
    j = np.asarray(j, dtype=float)
    w_a = np.asarray(w_a, dtype=float)
    jac = tensor.frobenius_norm(j @ w_a @ head.w) ** 2
    reg = tensor.frobenius_norm(w_a - np.eye(w_a.shape[0])) ** 2
    return (1.0 - gamma) * jac + gamma * reg


def jacobian_norm_sq(j, w_a, head: UnimodalHead) -> float:
    return tensor.frobenius_norm(np.asarray(j) @ np.asarray(w_a) @ head.w) ** 2


def jacobian_bound(gamma: float, k: int) -> float:
    """Upper bound ``gamma K / (2 (1 - gamma))`` on ``||J W_a W_A||_F^2`` at the solution."""
    if gamma >= 1.0:
        return math.inf
    return gamma * k / (2.0 * (1.0 - gamma))


def fused_prediction(za, zb, w_a, w_b, freq) -> np.ndarray:
    """``normalize(softmax(W_a za) * softmax(W_b zb) / freq)``."""
    pa = fusion.softmax(np.asarray(w_a) @ np.asarray(za, dtype=float))
    pb = fusion.softmax(np.asarray(w_b) @ np.asarray(zb, dtype=float))
    return fusion.statistical_fuse(pa, pb, freq)


def recalibrate(
    za,
    zb,
    head_a: UnimodalHead,
    head_b: UnimodalHead,
    freq,
    cfg: FusionConfig,
) -> RecalibrationResult:
    """Recalibrated fused prediction for a single sample.

    Starts from the plain statistical fusion, then runs ``cfg.t_max`` rounds of:
    Jacobian at the current prediction, Sylvester solve for the enabled
    modalities (both from the same Jacobian), re-fuse. A modality that is not
    regularized keeps the identity matrix.
    """
    za = tensor.as_vector(za, "za")
    zb = tensor.as_vector(zb, "zb")
    k = za.shape[0]
    if zb.shape[0] != k or head_a.k != k or head_b.k != k:
        raise DimensionError("logit and head class counts disagree")
    eye = np.eye(k)
    w_a, w_b = eye, eye
    p = fused_prediction(za, zb, w_a, w_b, freq)
    active = (cfg.regularize_a or cfg.regularize_b) and cfg.gamma < 1.0
    if not active:
        return RecalibrationResult(p, w_a, w_b, 0.0, 0.0, jacobian_bound(cfg.gamma, k), 0, cfg.gamma)

    iterations = 0
    jac_a = jac_b = 0.0
    for _ in range(cfg.t_max):
        j = softmax_jacobian(p)
        if cfg.regularize_a:
            w_a = solve_recalibration(j, head_a, cfg.gamma)
            jac_a = jacobian_norm_sq(j, w_a, head_a)
        if cfg.regularize_b:
            w_b = solve_recalibration(j, head_b, cfg.gamma)
            jac_b = jacobian_norm_sq(j, w_b, head_b)
        p = fused_prediction(za, zb, w_a, w_b, freq)
        iterations += 1
    return RecalibrationResult(
        p, w_a, w_b, jac_a, jac_b, jacobian_bound(cfg.gamma, k), iterations, cfg.gamma
    )


def unimodal_matrix(z, head: UnimodalHead, gamma: float) -> np.ndarray:
    """Recalibration matrix ``W_x`` for a single-network prediction ``softmax(z)``."""
    z = tensor.as_vector(z, "z")
    if z.shape[0] != head.k:
        raise DimensionError("logit length does not match head")
    k = head.k
    kappa = kappa_of(gamma)
    if kappa == 0.0:
        return np.eye(k)
    j = softmax_jacobian(fusion.softmax(z))
    if head.is_orthonormal:
        return tensor.inverse(kappa * (j @ j) + np.eye(k))
    return solve_recalibration(j, head, gamma)


def unimodal_recalibrate(z, head: UnimodalHead, gamma: float) -> np.ndarray:
    """``softmax(W_x z)`` with ``W_x`` from the unimodal relaxed loss."""
    z = tensor.as_vector(z, "z")
    if gamma == 1.0:
        return fusion.softmax(z)
    return fusion.softmax(unimodal_matrix(z, head, gamma) @ z)


def prediction_change_bound(l: float, gamma: float, k: int, eps_norm: float) -> float:
    """Worst-case change ``l * sqrt(gamma K / (2 (1 - gamma))) * ||eps||`` of the prediction."""
    if l < 0 or eps_norm < 0:
        raise ValueError("Lipschitz constant and perturbation norm must be non-negative")
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"the bound needs gamma in (0, 1), got {gamma}")
    return l * math.sqrt(gamma * k / (2.0 * (1.0 - gamma))) * eps_norm


def trace_identity_check(j, w_a, head: UnimodalHead, gamma: float) -> tuple[float, float]:
    """Both sides of ``||J W_a W_A||_F^2 = Tr[W_a - W_a W_a^T] / kappa``.

    The equality holds only when ``w_a`` solves the Sylvester equation.
    """
    kappa = kappa_of(gamma)
    if kappa == 0.0:
        raise DomainError("the trace identity is undefined at gamma = 1")
    w_a = np.asarray(w_a, dtype=float)
    lhs = jacobian_norm_sq(j, w_a, head)
    rhs = float(np.trace(w_a - w_a @ w_a.T)) / kappa
    return lhs, rhs


# -- unimodal binary case -------------------------------------------------------


def binary_coefficients(p, head: UnimodalHead) -> tuple[float, float, float]:
    """Entries ``(a, b, c)`` of the symmetric matrix ``M`` with ``J^2 (W W^T) = E M``.

    ``E = [[1, -1], [-1, 1]]``. For K = 2, ``J^2 = 2 (p1 p2)^2 E``, hence
    ``M = 2 (p1 p2)^2 W W^T``.
    """
    p = fusion.check_prediction(p)
    if p.shape != (2,) or head.k != 2:
        raise DimensionError("binary coefficients need K = 2")
    scale = 2.0 * (p[0] * p[1]) ** 2
    g = head.gram
    return scale * g[0, 0], scale * g[0, 1], scale * g[1, 1]


def block_inversion_rho(a: float, b: float, c: float, kappa: float) -> np.ndarray:
    """Entries ``(rho1, rho2, rho3, rho4)`` of ``W_x`` (row-major) via the 4x4 block system."""
    g = np.array([[1 + a * kappa, b * kappa], [b * kappa, 1 + c * kappa]])
    h = np.array([[-a * kappa, -b * kappa], [-b * kappa, -c * kappa]])
    system = np.block([[g, h], [h, g]])
    return tensor.solve_linear(system, np.array([1.0, 0.0, 0.0, 1.0]))


def rho_sum_closed_form(a: float, b: float, c: float, kappa: float) -> float:
    """``rho1 + rho4 - rho2 - rho3`` in closed form."""
    num = 2.0 * (a + 2.0 * b + c) * kappa + 2.0
    den = 4.0 * (a * c - b * b) * kappa**2 + 2.0 * (a + c) * kappa + 1.0
    return num / den


def order_preserving_2d(p, head: UnimodalHead, gamma: float) -> tuple[np.ndarray, float]:
    """``W_x`` entries from block inversion and the closed-form ``rho1 + rho4 - rho2 - rho3``.

    A non-negative sum means ``W_x`` cannot swap the two logits.
    """
    if head.k != 2:
        raise DimensionError(f"order_preserving_2d needs K = 2, got {head.k}")
    a, b, c = binary_coefficients(p, head)
    kappa = kappa_of(gamma)
    rho = block_inversion_rho(a, b, c, kappa)
    sum_expr = rho_sum_closed_form(a, b, c, kappa)
    direct = rho[0] + rho[3] - rho[1] - rho[2]
    if abs(direct - sum_expr) > 1e-9 * max(1.0, abs(sum_expr)):
        raise ArithmeticError(
            f"closed form {sum_expr!r} disagrees with block inversion {direct!r}"
        )
    return rho, sum_expr


# -- unimodal K > 2: feasibility of kappa ---------------------------------------


def pair_vector(k: int, i: int, j: int) -> np.ndarray:
    if i == j:
        raise ValueError("pair indices must differ")
    e = np.zeros(k)
    e[i], e[j] = 1.0, -1.0
    return e


def feasibility_matrix(j, kappa: float, i: int, j_idx: int) -> np.ndarray:
    """``2 e e^T + kappa (e e^T J^2 + J^2 e e^T)`` for the pair vector ``e = e_i - e_j``."""
    j = tensor.as_matrix(j, "j")
    e = pair_vector(j.shape[0], i, j_idx)
    eet = np.outer(e, e)
    j2 = j @ j
    return 2.0 * eet + kappa * (eet @ j2 + j2 @ eet)


def gamma_feasibility(j, kappa: float, i: int, j_idx: int) -> bool:
    """Whether ``kappa`` keeps the ``(i, j_idx)`` logit order (smallest eigenvalue >= 0)."""
    m = tensor.symmetrize(feasibility_matrix(j, kappa, i, j_idx))
    return tensor.min_eigenvalue(m) >= -FEASIBILITY_TOL


def feasible_for_all_pairs(j, kappa: float) -> bool:
    k = np.asarray(j).shape[0]
    return all(
        gamma_feasibility(j, kappa, i, jj) for i in range(k) for jj in range(k) if i != jj
    )


def argmax_with_margin(v, margin: float = FLIP_MARGIN) -> int | None:
    """Index of the largest entry, or ``None`` if the runner-up is within ``margin``."""
    v = np.asarray(v, dtype=float)
    order = np.argsort(-v, kind="stable")
    if v.shape[0] > 1 and v[order[0]] - v[order[1]] <= margin:
        return None
    return int(order[0])


def find_flip_kappa(z, head: UnimodalHead, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisect for the smallest ``kappa`` in ``[lo, hi]`` where the unimodal argmax changes.

    Requires the argmax at ``lo`` to equal ``argmax(z)`` and to differ at ``hi``.
    """
    z = tensor.as_vector(z, "z")
    base = int(np.argmax(z))

    def flipped(kappa: float) -> bool:
        w_x = unimodal_matrix(z, head, 1.0 / (1.0 + kappa))
        return int(np.argmax(w_x @ z)) != base

    if flipped(lo) or not flipped(hi):
        raise ValueError("argmax must be unchanged at lo and changed at hi")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if flipped(mid):
            hi = mid
        else:
            lo = mid
    return hi
