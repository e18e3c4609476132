import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robust_fusion import tensor
from robust_fusion.errors import DimensionError, NonFiniteError, NoConvergence, SingularMatrix

from conftest import random_psd, random_spd


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


class TestMatmul:
    def test_identity(self, rng):
        m = rng.normal(size=(3, 3))
        np.testing.assert_array_equal(tensor.matmul(np.eye(3), m), m)

    def test_permutation(self):
        got = tensor.matmul([[1, 2], [3, 4]], [[0, 1], [1, 0]])
        np.testing.assert_array_equal(got, [[2, 1], [4, 3]])

    def test_against_triple_loop(self, rng):
        a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        np.testing.assert_allclose(tensor.matmul(a, b), naive_matmul(a, b), atol=1e-12, rtol=0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            tensor.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_rejects_nan(self):
        with pytest.raises(NonFiniteError):
            tensor.matmul([[np.nan]], [[1.0]])

    @settings(max_examples=50, deadline=None)
    @given(square(3), square(3), square(3))
    def test_associative(self, a, b, c):
        left = tensor.matmul(tensor.matmul(a, b), c)
        right = tensor.matmul(a, tensor.matmul(b, c))
        mag = np.abs(a).max() * np.abs(b).max() * np.abs(c).max() * 9 + 1.0
        assert np.max(np.abs(left - right)) <= 1e-10 * mag


class TestSmallOps:
    def test_frobenius_identity(self):
        assert tensor.frobenius_norm(np.eye(3)) == pytest.approx(math.sqrt(3), abs=1e-15)

    def test_trace(self):
        assert tensor.trace(np.diag([1.0, 2.0, 3.0])) == 6.0

    def test_kron_identity_is_block_diagonal(self, rng):
        m = rng.normal(size=(2, 2))
        expect = np.zeros((4, 4))
        expect[:2, :2] = m
        expect[2:, 2:] = m
        np.testing.assert_array_equal(tensor.kron(np.eye(2), m), expect)

    def test_transpose_add_scale(self, rng):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        np.testing.assert_array_equal(tensor.transpose(a), a.T)
        np.testing.assert_array_equal(tensor.add(a, b), a + b)
        np.testing.assert_array_equal(tensor.scale(a, 2.5), 2.5 * a)
        with pytest.raises(DimensionError):
            tensor.add(a, b.T)

    def test_trace_requires_square(self):
        with pytest.raises(DimensionError):
            tensor.trace(np.ones((2, 3)))


class TestLinearSolve:
    def test_identity(self):
        v = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(tensor.solve_linear(np.eye(3), v), v)

    def test_diagonal(self):
        np.testing.assert_allclose(tensor.solve_linear(np.diag([2.0, 5.0]), [4.0, 10.0]), [2.0, 2.0])

    def test_residual_10x10(self, rng):
        a = rng.normal(size=(10, 10)) + 10 * np.eye(10)
        x_true = rng.normal(size=10)
        x = tensor.solve_linear(a, a @ x_true)
        assert np.linalg.norm(a @ x - a @ x_true) <= 1e-12 * np.linalg.norm(a) * np.linalg.norm(x_true)
        np.testing.assert_allclose(x, np.linalg.solve(a, a @ x_true), atol=1e-12)

    def test_matrix_rhs(self, rng):
        a = random_spd(rng, 4)
        rhs = rng.normal(size=(4, 3))
        np.testing.assert_allclose(tensor.solve_linear(a, rhs), np.linalg.solve(a, rhs), atol=1e-12)

    def test_needs_pivoting(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(tensor.solve_linear(a, [3.0, 7.0]), [7.0, 3.0])

    def test_lu_reconstructs_permuted_rows(self, rng):
        m = rng.normal(size=(6, 6))
        lu, perm = tensor.lu_factor(m)
        lower = np.tril(lu, -1) + np.eye(6)
        upper = np.triu(lu)
        np.testing.assert_allclose(lower @ upper, m[perm], atol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            tensor.solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])

    def test_pivot_tolerance_is_relative(self):
        m = np.array([[1.0, 0.0], [0.0, 1e-13]])
        with pytest.raises(SingularMatrix):
            tensor.inverse(m)
        np.testing.assert_allclose(tensor.inverse(m, pivot_tol=1e-15), np.diag([1.0, 1e13]))

    def test_rhs_shape(self):
        with pytest.raises(DimensionError):
            tensor.solve_linear(np.eye(2), np.ones(3))


class TestInverse:
    def test_identity(self):
        np.testing.assert_array_equal(tensor.inverse(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        np.testing.assert_allclose(tensor.inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))

    def test_spd_residual(self, rng):
        m = random_spd(rng, 6)
        assert np.linalg.norm(m @ tensor.inverse(m) - np.eye(6)) <= 1e-12

    def test_involution(self, rng):
        for _ in range(20):
            m = rng.normal(size=(5, 5)) + 4 * np.eye(5)
            if np.linalg.cond(m) >= 1e6:
                continue
            assert np.max(np.abs(tensor.inverse(tensor.inverse(m)) - m)) <= 1e-7 * 5

    def test_non_square(self):
        with pytest.raises(DimensionError):
            tensor.inverse(np.ones((2, 3)))


class TestSymEig:
    def test_diagonal(self):
        vals, vecs = tensor.sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(vals, [1.0, 2.0, 3.0])
        assert np.allclose(np.abs(vecs), np.eye(3)[:, [1, 2, 0]])

    def test_rank_one_pair_matrix(self):
        e = np.array([1.0, -1.0, 0.0])
        vals, _ = tensor.sym_eig(2 * np.outer(e, e))
        np.testing.assert_allclose(vals, [0.0, 0.0, 4.0], atol=1e-14)

    def test_reconstruction_8x8(self, rng):
        m = rng.normal(size=(8, 8))
        m = m + m.T
        vals, vecs = tensor.sym_eig(m)
        assert np.linalg.norm(vecs @ np.diag(vals) @ vecs.T - m) <= 1e-9
        assert np.linalg.norm(vecs.T @ vecs - np.eye(8)) <= 1e-12
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(m), atol=1e-10)

    def test_ascending(self, rng):
        m = random_spd(rng, 7)
        assert np.all(np.diff(tensor.sym_eig(m).eigenvalues) >= 0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (4, 3), elements=finite))
    def test_psd_input_nonnegative(self, f):
        m = f @ f.T
        lam = tensor.min_eigenvalue(m)
        assert lam >= -1e-10 * max(tensor.frobenius_norm(m), 1e-300)

    def test_repeated_eigenvalues(self):
        vals, vecs = tensor.sym_eig(np.eye(4) * 2.0)
        np.testing.assert_array_equal(vals, [2.0] * 4)
        np.testing.assert_array_equal(vecs, np.eye(4))

    def test_rejects_asymmetric(self):
        with pytest.raises(DimensionError):
            tensor.sym_eig([[1.0, 2.0], [0.0, 1.0]])

    def test_sweep_budget(self, rng):
        with pytest.raises(NoConvergence):
            tensor.sym_eig(random_psd(rng, 6), max_sweeps=1)

    def test_zero_matrix(self):
        vals, vecs = tensor.sym_eig(np.zeros((3, 3)))
        np.testing.assert_array_equal(vals, np.zeros(3))
        np.testing.assert_array_equal(vecs, np.eye(3))
