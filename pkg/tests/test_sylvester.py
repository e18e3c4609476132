import numpy as np
import pytest
import scipy.linalg

from robust_fusion import jacreg, sylvester, tensor
from robust_fusion.errors import DegenerateSpectrum, DimensionError
from robust_fusion.sylvester import SylvesterOperands

from conftest import random_psd, random_spd


def ops_from(rng, k, kappa=3.0):
    p = rng.dirichlet(np.ones(k))
    j = np.outer(p, p) - np.diag(p)
    return SylvesterOperands(kappa * j @ j, random_spd(rng, k), kappa)


class TestOperands:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="not symmetric"):
            SylvesterOperands(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            SylvesterOperands(np.zeros((2, 2)), np.eye(3))

    def test_rejects_negative_kappa(self):
        with pytest.raises(ValueError):
            SylvesterOperands(np.zeros((2, 2)), np.eye(2), -1.0)

    def test_validate_spectra(self, rng):
        SylvesterOperands(random_psd(rng, 3, rank=1), np.eye(3)).validate_spectra()
        with pytest.raises(ValueError, match="PSD"):
            SylvesterOperands(-np.eye(2), np.eye(2)).validate_spectra()
        with pytest.raises(ValueError, match="PD"):
            SylvesterOperands(np.eye(2), np.diag([1.0, 0.0])).validate_spectra()


class TestStructured:
    def test_zero_a_gives_identity(self, rng):
        ops = SylvesterOperands(np.zeros((4, 4)), random_spd(rng, 4))
        np.testing.assert_allclose(sylvester.solve_structured(ops), np.eye(4), atol=1e-12)

    def test_scalar(self):
        w = sylvester.solve_structured(SylvesterOperands([[2.0]], [[3.0]]))
        assert w[0, 0] == pytest.approx(3.0 / 5.0, abs=1e-15)

    def test_matches_oracle_k4(self, rng):
        ops = SylvesterOperands(random_psd(rng, 4), random_spd(rng, 4))
        np.testing.assert_allclose(
            sylvester.solve_structured(ops), sylvester.solve_kronecker_oracle(ops), atol=1e-8, rtol=0
        )

    @pytest.mark.parametrize("k", [2, 3, 5, 8])
    def test_matches_scipy(self, rng, k):
        for _ in range(25):
            ops = ops_from(rng, k, kappa=float(rng.uniform(0.1, 50)))
            ref = scipy.linalg.solve_sylvester(ops.a, ops.b, ops.b)
            np.testing.assert_allclose(sylvester.solve_structured(ops), ref, atol=1e-8, rtol=0)

    def test_reused_b_decomposition(self, rng):
        ops = ops_from(rng, 5)
        direct = sylvester.solve_structured(ops)
        reused = sylvester.solve_structured(ops, tensor.sym_eig(ops.b))
        np.testing.assert_allclose(direct, reused, atol=1e-14)

    def test_degenerate_spectrum(self):
        ops = SylvesterOperands(np.zeros((2, 2)), np.diag([1.0, 1e-14]))
        with pytest.raises(DegenerateSpectrum):
            sylvester.solve_structured(ops)

    def test_solution_not_assumed_symmetric(self, rng):
        w = sylvester.solve_structured(ops_from(rng, 4, kappa=20.0))
        assert np.linalg.norm(w - w.T) > 1e-6


class TestKroneckerOracle:
    def test_zero_a(self):
        ops = SylvesterOperands(np.zeros((3, 3)), np.diag([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(sylvester.solve_kronecker_oracle(ops), np.eye(3), atol=1e-14)

    def test_diagonal(self):
        alpha, beta = np.array([1.0, 2.0, 0.5]), np.array([3.0, 1.0, 4.0])
        w = sylvester.solve_kronecker_oracle(SylvesterOperands(np.diag(alpha), np.diag(beta)))
        np.testing.assert_allclose(w, np.diag(beta / (alpha + beta)), atol=1e-14)

    def test_k3_equals_structured(self, rng):
        ops = ops_from(rng, 3)
        np.testing.assert_allclose(
            sylvester.solve_kronecker_oracle(ops), sylvester.solve_structured(ops), atol=1e-10
        )

    def test_size_limit(self):
        k = sylvester.KRONECKER_MAX_K + 1
        with pytest.raises(DimensionError):
            sylvester.solve_kronecker_oracle(SylvesterOperands(np.zeros((k, k)), np.eye(k)))


class TestResidual:
    def test_exact_solution(self, rng):
        ops = ops_from(rng, 5)
        assert sylvester.residual(ops, sylvester.solve_structured(ops)) <= 1e-9

    def test_zero_a_identity(self, rng):
        ops = SylvesterOperands(np.zeros((3, 3)), random_spd(rng, 3))
        assert sylvester.residual(ops, np.eye(3)) == 0.0

    def test_zero_candidate(self, rng):
        ops = ops_from(rng, 3)
        assert sylvester.residual(ops, np.zeros((3, 3))) == pytest.approx(np.linalg.norm(ops.b))


def test_condition_grows_as_gamma_shrinks(rng):
    for _ in range(20):
        k = int(rng.integers(2, 6))
        head = jacreg.UnimodalHead(rng.normal(size=(k, k + 2)), np.zeros(k))
        p = rng.dirichlet(np.ones(k))
        j = jacreg.softmax_jacobian(p)
        conds = [
            sylvester.kronecker_condition(jacreg.build_operands(j, head, g)) for g in (0.5, 0.1, 0.01, 0.001)
        ]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(conds, conds[1:]))


def test_condition_matches_numpy(rng):
    ops = ops_from(rng, 3)
    k = 3
    system = np.kron(np.eye(k), ops.a) + np.kron(ops.b.T, np.eye(k))
    assert sylvester.kronecker_condition(ops) == pytest.approx(np.linalg.cond(system), rel=1e-9)
