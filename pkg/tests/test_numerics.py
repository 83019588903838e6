import numpy as np
import pytest
import scipy.linalg

from mmfq.errors import Inconclusive, Singular, SizeLimit
from mmfq.numerics import (conv_integral, group_inverse, matrix_exp,
                           null_row_vector, solve_linear, solve_sylvester,
                           sylvester_residual)

from conftest import random_generator


def simpson_matrix(f, a, b, panels):
    """Composite Simpson quadrature of a matrix-valued function."""
    xs = np.linspace(a, b, 2 * panels + 1)
    vals = np.array([f(x) for x in xs])
    h = (b - a) / (2 * panels)
    weights = np.ones(len(xs))
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return h / 3.0 * np.tensordot(weights, vals, axes=(0, 0))


class TestSolveLinear:
    def test_identity(self):
        B = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(solve_linear(np.eye(3), B), B)

    def test_diagonal(self):
        X = solve_linear(np.diag([2.0, 4.0]), np.array([[2.0], [8.0]]))
        assert np.allclose(X, [[1.0], [2.0]])

    def test_residual_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            M = rng.normal(size=(8, 8)) + 8 * np.eye(8)
            B = rng.normal(size=(8, 3))
            X = solve_linear(M, B)
            scale = (np.linalg.norm(M, np.inf) * np.linalg.norm(X, np.inf)
                     + np.linalg.norm(B, np.inf))
            assert np.linalg.norm(M @ X - B, np.inf) <= 1e-10 * scale

    def test_singular_raises(self):
        M = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(Singular):
            solve_linear(M, np.eye(2))


class TestSolveSylvester:
    def test_scalar(self):
        X = solve_sylvester(np.array([[-2.0]]), np.array([[-3.0]]),
                            np.array([[5.0]]))
        assert np.allclose(X, [[-1.0]])

    def test_zero_rhs(self):
        rng = np.random.default_rng(1)
        K = rng.normal(size=(3, 3)) - 4 * np.eye(3)
        U = rng.normal(size=(2, 2)) - 4 * np.eye(2)
        assert np.array_equal(solve_sylvester(K, U, np.zeros((3, 2))),
                              np.zeros((3, 2)))

    def test_quadrature_oracle(self):
        # for stable K and U the solution of K X + X U = H is
        # -int_0^inf exp(Kt) H exp(Ut) dt
        rng = np.random.default_rng(2)
        K = rng.normal(size=(3, 3)) - 3 * np.eye(3)
        U = rng.normal(size=(2, 2)) - 3 * np.eye(2)
        H = rng.normal(size=(3, 2))
        X = solve_sylvester(K, U, H)
        integral = simpson_matrix(
            lambda t: matrix_exp(K * t) @ H @ matrix_exp(U * t), 0.0, 30.0, 3000)
        assert np.abs(X + integral).max() < 1e-8
        assert sylvester_residual(K, U, H, X) <= 1e-10

    def test_fixed_point_agreement(self):
        # on diagonally dominant data the iteration X <- K^{-1}(H - X U)
        # converges to the same solution
        rng = np.random.default_rng(3)
        K = rng.normal(size=(4, 4)) + 10 * np.eye(4)
        U = 0.5 * rng.normal(size=(3, 3))
        H = rng.normal(size=(4, 3))
        X = solve_sylvester(K, U, H)
        Y = np.zeros((4, 3))
        for _ in range(300):
            Y = solve_linear(K, H - Y @ U)
        assert np.abs(X - Y).max() < 1e-9

    def test_size_limit(self):
        with pytest.raises(SizeLimit):
            solve_sylvester(np.eye(70), np.eye(70), np.ones((70, 70)),
                            size_limit=4096)


class TestMatrixExp:
    def test_zero(self):
        assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        out = matrix_exp(np.diag([1.0, -2.0]))
        assert np.allclose(out, np.diag([np.e, np.exp(-2.0)]), rtol=1e-14)

    def test_nilpotent(self):
        out = matrix_exp(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert np.allclose(out, [[1.0, 1.0], [0.0, 1.0]], atol=1e-15)

    def test_inverse_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            M = rng.normal(size=(5, 5))
            M *= 10.0 / max(np.linalg.norm(M, 1), 10.0)
            P = matrix_exp(M) @ matrix_exp(-M)
            assert np.abs(P - np.eye(5)).max() < 1e-9

    def test_matches_scipy(self):
        rng = np.random.default_rng(5)
        M = rng.normal(size=(6, 6)) * 3.0
        assert np.allclose(matrix_exp(M), scipy.linalg.expm(M),
                           rtol=1e-11, atol=1e-11)


class TestGroupInverse:
    def test_two_state(self):
        M = np.array([[-1.0, 1.0], [1.0, -1.0]])
        sharp = group_inverse(M, np.array([0.5, 0.5]))
        assert np.allclose(sharp, M / 4.0, atol=1e-14)

    def test_nonsingular_reduces_to_inverse(self):
        M = np.array([[2.0, 1.0], [0.0, 3.0]])
        sharp = group_inverse(M, np.zeros(2))
        assert np.allclose(sharp, np.linalg.inv(M), atol=1e-13)

    def test_identities_fuzz(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            M = random_generator(4, rng)
            pi = null_row_vector(M)
            sharp = group_inverse(M, pi)
            assert np.abs(M @ sharp @ M - M).max() < 1e-10
            assert np.abs(sharp @ M @ sharp - sharp).max() < 1e-10
            assert np.abs(M @ sharp - sharp @ M).max() < 1e-10


class TestStableSpectrum:
    def test_minus_identity(self):
        from mmfq.numerics import stable_spectrum
        assert stable_spectrum(-np.eye(3)) is True

    def test_zero_is_inconclusive(self):
        from mmfq.numerics import stable_spectrum
        with pytest.raises(Inconclusive):
            stable_spectrum(np.array([[0.0]]))

    def test_positive_abscissa(self):
        from mmfq.numerics import stable_spectrum
        assert stable_spectrum(np.array([[0.5]])) is False


class TestConvIntegral:
    def test_zero_length(self):
        K = np.array([[-1.0, 0.5], [0.0, -2.0]])
        assert np.array_equal(conv_integral(K, np.eye(2), 0.0), np.zeros((2, 2)))

    def test_zero_exponent(self):
        D = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(conv_integral(np.zeros((2, 2)), D, 2.5), 2.5 * D,
                           atol=1e-13)

    def test_scalar_closed_form(self):
        # commuting K and D give x exp(Kx) D
        out = conv_integral(np.array([[-1.0]]), np.array([[1.0]]), 1.0)
        assert abs(out[0, 0] - np.exp(-1.0)) < 1e-14

    def test_simpson_fuzz(self):
        rng = np.random.default_rng(7)
        K = rng.normal(size=(3, 3)) - 2 * np.eye(3)
        D = rng.normal(size=(3, 3))
        for x in (0.7, 2.0, 5.0):
            quad = simpson_matrix(
                lambda s: matrix_exp(K * (x - s)) @ D @ matrix_exp(K * s),
                0.0, x, 2000)
            assert np.abs(conv_integral(K, D, x) - quad).max() < 1e-8


class TestNullRowVector:
    def test_symmetric_generator(self):
        M = np.array([[-1.0, 1.0], [1.0, -1.0]])
        assert np.allclose(null_row_vector(M), [0.5, 0.5], atol=1e-14)

    def test_residual(self):
        rng = np.random.default_rng(8)
        M = random_generator(6, rng)
        v = null_row_vector(M)
        assert np.abs(v @ M).max() <= 1e-10 * np.linalg.norm(M, np.inf)
        assert abs(v.sum() - 1.0) < 1e-12
