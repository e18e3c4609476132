"""Self-check suite run by ``robust-fusion verify``.

Each check draws its own random instances from a fixed seed and returns a
:class:`CheckResult`. ``quick=True`` cuts trial counts tenfold. ``mutate`` swaps
in a deliberately wrong component so CI can confirm the suite notices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fusion, jacreg, nn, sylvester, tensor

MUTATIONS = ("none", "jacobian-sign")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_operands(rng, k: int, kappa: float | None = None) -> sylvester.SylvesterOperands:
    """PSD ``a = kappa J^2`` from a random prediction and SPD ``b`` from a random head."""
    p = rng.dirichlet(np.ones(k))
    j = np.outer(p, p) - np.diag(p)
    if kappa is None:
        kappa = 1.0 / rng.uniform(0.05, 0.95) - 1.0
    w = rng.normal(size=(k, k + int(rng.integers(0, 4))))
    b = tensor.symmetrize(np.linalg.inv(w @ w.T))
    return sylvester.SylvesterOperands(kappa * (j @ j), b, kappa)


def random_head(rng, k: int, h: int | None = None) -> jacreg.UnimodalHead:
    h = h if h is not None else k + int(rng.integers(0, 4))
    return jacreg.UnimodalHead(rng.normal(size=(k, h)), rng.normal(size=k))


def check_logit_equivalence(n: int, rng) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(2, 11))
        za, zb = rng.normal(scale=3, size=k), rng.normal(scale=3, size=k)
        freq = rng.dirichlet(np.ones(k) * 2) * 0.98 + 0.02 / k
        lhs = fusion.statistical_fuse(fusion.softmax(za), fusion.softmax(zb), freq)
        worst = max(worst, float(np.max(np.abs(lhs - fusion.logit_fuse(za, zb, freq)))))
    return CheckResult("logit_fusion_equivalence", worst <= 1e-12, f"max deviation {worst:.2e} over {n}")


def check_sylvester(n: int, rng) -> CheckResult:
    worst_gap = worst_res = 0.0
    for _ in range(n):
        ops = random_operands(rng, int(rng.choice([2, 3, 5, 8])))
        w = sylvester.solve_structured(ops)
        worst_gap = max(worst_gap, float(np.max(np.abs(w - sylvester.solve_kronecker_oracle(ops)))))
        worst_res = max(worst_res, sylvester.relative_residual(ops, w))
    ok = worst_gap <= 1e-8 and worst_res <= 1e-9
    return CheckResult("sylvester_oracle", ok, f"max gap {worst_gap:.2e}, max residual {worst_res:.2e}")


def check_trace_identity(n: int, rng, jacobian: Callable) -> CheckResult:
    worst_rel = 0.0
    worst_slack = -math.inf
    for gamma in (0.1, 0.5, 0.9):
        for _ in range(n):
            k = int(rng.choice([2, 3, 5, 10]))
            head = random_head(rng, k)
            j = jacobian(rng.dirichlet(np.ones(k)))
            w_a = jacreg.solve_recalibration(j, head, gamma)
            lhs, rhs = jacreg.trace_identity_check(j, w_a, head, gamma)
            worst_rel = max(worst_rel, abs(lhs - rhs) / (1.0 + abs(lhs)))
            worst_slack = max(worst_slack, lhs - jacreg.jacobian_bound(gamma, k))
    ok = worst_rel <= 1e-8 and worst_slack <= 1e-9
    return CheckResult(
        "trace_identity_and_bound",
        ok,
        f"max relative gap {worst_rel:.2e}, max excess over bound {worst_slack:.2e}",
    )


def check_softmax_jacobian(rng, jacobian: Callable, h: float = 1e-5) -> CheckResult:
    worst = 0.0
    zs = [np.array([1.0, 0.0, 2.0])] + [rng.normal(size=int(rng.integers(2, 6))) for _ in range(5)]
    for z in zs:
        fd = np.empty((z.size, z.size))
        for c in range(z.size):
            e = np.zeros(z.size)
            e[c] = h
            fd[:, c] = (fusion.softmax(z + e) - fusion.softmax(z - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd + jacobian(fusion.softmax(z))))))
    return CheckResult("softmax_jacobian_fd", worst <= 1e-6, f"max |fd - (-J)| {worst:.2e}")


def gradient_check(model: nn.MlpModel, x, y, h: float = 1e-5) -> tuple[float, float]:
    """Worst relative error of parameter and input gradients against central differences."""

    def rel(a, b):
        return abs(a - b) / max(1.0, abs(a), abs(b))

    _, grads, input_grad = nn.loss_and_grads(model, x, y)
    worst_param = 0.0
    for li, layer in enumerate(model.layers):
        for arr, grad in ((layer.weight, grads[li][0]), (layer.bias, grads[li][1])):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                up = nn.loss_and_grads(model, x, y)[0]
                arr[idx] = orig - h
                down = nn.loss_and_grads(model, x, y)[0]
                arr[idx] = orig
                worst_param = max(worst_param, rel((up - down) / (2 * h), grad[idx]))
    x = np.array(x, dtype=float)
    worst_input = 0.0
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (nn.loss_and_grads(model, xp, y)[0] - nn.loss_and_grads(model, xm, y)[0]) / (2 * h)
        worst_input = max(worst_input, rel(fd, input_grad[idx]))
    return worst_param, worst_input


def check_gradients(rng, n_samples: int) -> CheckResult:
    model = nn.init_mlp([2, 16, 16, 2], seed=int(rng.integers(1 << 31)))
    x = rng.normal(size=(n_samples, 2))
    y = rng.integers(0, 2, size=n_samples)
    wp, wi = gradient_check(model, x, y)
    ok = bool(wp <= 1e-5 and wi <= 1e-5)
    return CheckResult("mlp_gradients_fd", ok, f"param rel err {wp:.2e}, input rel err {wi:.2e}")


def equal_row_norm_head(rng, h: int = 3) -> jacreg.UnimodalHead:
    """Binary head whose two weight rows have the same norm (``e = (1, -1)`` is then an eigenvector of ``W W^T``)."""
    w = rng.normal(size=(2, h))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return jacreg.UnimodalHead(w * rng.uniform(0.2, 5.0), rng.normal(size=2))


def count_binary_flips(n: int, rng, head_factory) -> tuple[int, float, float]:
    """Argmax flips of ``W_x z``, smallest closed-form rho sum, worst closed-form/block gap."""
    flips = 0
    min_sum = math.inf
    worst_gap = 0.0
    for _ in range(n):
        head = head_factory(rng)
        gamma = float(rng.uniform(1e-3, 1.0 - 1e-3))
        z = rng.normal(scale=3, size=2)
        if abs(z[0] - z[1]) <= 1e-9:
            continue
        rho, s = jacreg.order_preserving_2d(fusion.softmax(z), head, gamma)
        min_sum = min(min_sum, s)
        worst_gap = max(worst_gap, abs(rho[0] + rho[3] - rho[1] - rho[2] - s))
        z_new = jacreg.unimodal_matrix(z, head, gamma) @ z
        if np.sign(z_new[0] - z_new[1]) != np.sign(z[0] - z[1]):
            flips += 1
    return flips, min_sum, worst_gap


def check_order_preserving(n: int, rng) -> CheckResult:
    flips, min_sum, gap = count_binary_flips(n, rng, equal_row_norm_head)
    generic, _, _ = count_binary_flips(n, rng, lambda r: random_head(r, 2))
    ok = bool(flips == 0 and min_sum >= 0 and gap <= 1e-9)
    return CheckResult(
        "binary_order_preserving",
        ok,
        f"{flips} flips with equal-row-norm heads, min rho sum {min_sum:.3e}, "
        f"closed-form gap {gap:.1e}; generic heads (informational): {generic}/{n} flips",
    )


def check_worked_example() -> CheckResult:
    head = jacreg.identity_head(3)
    z = np.array([1.0, 0.0, 2.0])
    p_half = jacreg.unimodal_recalibrate(z, head, 0.5)
    p_small = jacreg.unimodal_recalibrate(z, head, 0.01)
    ok = bool(
        np.max(np.abs(p_half - [0.270, 0.096, 0.635])) <= 2e-3
        and np.max(np.abs(p_small - [0.391, 0.219, 0.390])) <= 2e-3
        and int(np.argmax(p_small)) == 0
    )
    return CheckResult("worked_example_k3", ok, f"gamma=0.5 -> {p_half.round(4)}, gamma=0.01 -> {p_small.round(4)}")


def check_feasibility(jacobian: Callable) -> CheckResult:
    head = jacreg.identity_head(3)
    z = np.array([1.0, 0.0, 2.0])
    kappa_star = jacreg.find_flip_kappa(z, head, 1.0, 99.0)
    j = jacobian(fusion.softmax(z))
    fails_after = not jacreg.feasible_for_all_pairs(j, kappa_star + 0.01)
    ok = 1.0 < kappa_star < 99.0 and fails_after and jacreg.feasible_for_all_pairs(j, 0.0)
    return CheckResult("gamma_feasibility", ok, f"flip at kappa*={kappa_star:.6f}")


def check_first_order_bound(n: int, rng) -> CheckResult:
    worst = 0.0
    violations = 0
    for _ in range(n):
        k = int(rng.choice([2, 3, 5, 10]))
        head = random_head(rng, k)
        gamma = float(rng.choice([0.1, 0.5, 0.9]))
        h = rng.normal(size=head.w.shape[1])
        zb = rng.normal(size=k)
        freq = rng.dirichlet(np.ones(k) * 5)
        cfg = jacreg.FusionConfig(gamma)
        res = jacreg.recalibrate(head.logits(h), zb, head, jacreg.identity_head(k), freq, cfg)
        delta = rng.normal(size=h.shape)
        delta *= 1e-4 / np.linalg.norm(delta)
        moved = jacreg.fused_prediction(head.logits(h + delta), zb, res.w_a, res.w_b, freq)
        change = float(np.linalg.norm(moved - res.p_prime))
        bound = jacreg.prediction_change_bound(1.0, gamma, k, 1e-4)
        worst = max(worst, change / bound)
        violations += change > bound + 1e-6
    return CheckResult("first_order_bound", violations == 0, f"worst change/bound {worst:.3f}")


def run_all(quick: bool = False, seed: int = 0, mutate: str = "none") -> list[CheckResult]:
    if mutate not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutate!r}")
    jacobian = jacreg.softmax_jacobian
    if mutate == "jacobian-sign":
        def jacobian(p):
            return -jacreg.softmax_jacobian(p)

    div = 10 if quick else 1
    rng = np.random.default_rng(seed)
    return [
        check_worked_example(),
        check_logit_equivalence(1000 // div, rng),
        check_sylvester(500 // div, rng),
        check_trace_identity(100 // div, rng, jacobian),
        check_softmax_jacobian(rng, jacobian),
        check_gradients(rng, 4 if quick else 8),
        check_order_preserving(10_000 // div, rng),
        check_feasibility(jacobian),
        check_first_order_bound(100 // div, rng),
    ]
