import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from douglab import linalg
from douglab.errors import DimensionMismatch, NotPd, NotSymmetric, SingularSystem


def _random_hurwitz(seed, d):
    g = np.random.default_rng(seed)
    P = g.standard_normal((d, d))
    S = g.standard_normal((d, d))
    return -P @ P.T - 0.3 * np.eye(d) + (S - S.T)


class TestLyapunov:
    def test_identity_example(self):
        np.testing.assert_allclose(linalg.solve_lyapunov(-np.eye(2), np.eye(2)), 0.5 * np.eye(2), atol=1e-14)

    def test_scalar_example(self):
        assert linalg.solve_lyapunov([[-2.0]], [[4.0]])[0, 0] == pytest.approx(1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 6))
    def test_residual_and_scipy_oracle(self, seed, d):
        A = _random_hurwitz(seed, d)
        Q = np.eye(d)
        X = linalg.solve_lyapunov(A, Q)
        assert np.linalg.norm(A.T @ X + X @ A + Q) <= 1e-9 * max(1.0, np.linalg.norm(X))
        # scipy solves A X + X A^H = Q, so pass A^T and -Q
        np.testing.assert_allclose(X, sla.solve_continuous_lyapunov(A.T, -Q), rtol=1e-8, atol=1e-10)

    def test_singular_raises(self):
        with pytest.raises(SingularSystem):
            linalg.solve_lyapunov([[0.0, 1.0], [-1.0, 0.0]], np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            linalg.solve_lyapunov(-np.eye(2), np.eye(3))


class TestHurwitz:
    @pytest.mark.parametrize("A, expected", [
        (-np.eye(2), True),
        (np.eye(2), False),
        (np.array([[0.0, -1.0], [1.0, 0.0]]), False),
    ])
    def test_examples(self, A, expected):
        assert linalg.is_hurwitz(A) is expected

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 5))
    def test_agrees_with_eigenvalues(self, seed, d):
        A = np.random.default_rng(seed).standard_normal((d, d))
        assert linalg.is_hurwitz(A) == bool(np.max(np.linalg.eigvals(A).real) < 0)


class TestEigen:
    def test_diagonal(self):
        w, _ = linalg.symmetric_eigen(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(w, [1.0, 3.0])

    def test_two_by_two(self):
        w, Q = linalg.symmetric_eigen([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(w, [1.0, 3.0], atol=1e-14)
        np.testing.assert_allclose(Q @ np.diag(w) @ Q.T, [[2.0, 1.0], [1.0, 2.0]], atol=1e-13)

    def test_rejects_nonsymmetric(self):
        with pytest.raises(NotSymmetric):
            linalg.symmetric_eigen([[1.0, 2.0], [0.0, 1.0]])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 7))
    def test_matches_numpy(self, seed, d):
        M = np.random.default_rng(seed).standard_normal((d, d))
        S = M + M.T
        w, Q = linalg.symmetric_eigen(S)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(S), atol=1e-10 * max(1.0, np.abs(w).max()))
        np.testing.assert_allclose(Q.T @ Q, np.eye(d), atol=1e-10)


class TestSqrtAndCholesky:
    def test_sqrt_diagonal(self):
        np.testing.assert_allclose(linalg.spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_cholesky_rejects_indefinite(self):
        with pytest.raises(NotPd):
            linalg.cholesky([[1.0, 2.0], [2.0, 1.0]])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 6))
    def test_roundtrips(self, seed, d):
        M = np.random.default_rng(seed).standard_normal((d, d))
        S = M @ M.T + 0.1 * np.eye(d)
        R = linalg.spd_sqrt(S)
        np.testing.assert_allclose(R @ R, S, rtol=1e-9, atol=1e-10)
        L = linalg.cholesky(S)
        np.testing.assert_allclose(L @ L.T, S, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(linalg.spd_inv_sqrt(S) @ R, np.eye(d), atol=1e-8)


class TestVNorms:
    def test_v_norm_diagonal(self):
        assert linalg.v_norm([1.0, 1.0], np.diag([4.0, 9.0])) == pytest.approx(math.sqrt(13.0))

    def test_v_norm_coupled(self):
        assert linalg.v_norm([1.0, 0.0], [[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(math.sqrt(2.0))

    def test_operator_norm_of_scalar_multiple(self):
        V = np.array([[2.0, 1.0], [1.0, 2.0]])
        assert linalg.v_operator_norm(-2.5 * np.eye(2), V) == pytest.approx(2.5)

    def test_operator_norm_identity_weight(self):
        assert linalg.v_operator_norm(np.diag([2.0, -3.0]), np.eye(2)) == pytest.approx(3.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 5))
    def test_operator_norm_is_sup(self, seed, d):
        g = np.random.default_rng(seed)
        M = g.standard_normal((d, d))
        V = M @ M.T + 0.2 * np.eye(d)
        U = g.standard_normal((d, d))
        op = linalg.v_operator_norm(U, V)
        for x in g.standard_normal((50, d)):
            assert linalg.v_norm(U @ x, V) <= op * linalg.v_norm(x, V) * (1 + 1e-9)
