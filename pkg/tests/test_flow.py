import numpy as np
import pytest

from rankflow import (
    DomainError,
    FlowProblem,
    ShapeError,
    factor_field_g,
    factor_field_h,
    gradient,
    inner,
    lyapunov_rate,
    objective,
    quasi_project,
    rk4_step,
    tangent_adjoint,
    tangent_map,
    vector_field,
)

from conftest import diag


def random_rank(rng, m, n, k):
    return rng.standard_normal((m, k)) @ rng.standard_normal((k, n))


class TestObjective:
    def test_examples(self, rng, A43):
        assert objective(A43, A43) == 0.0
        assert objective(A43, diag(4, 3, [3, 2, 0])) == 0.5
        X = rng.standard_normal((4, 3))
        assert objective(np.zeros((4, 3)), X) == pytest.approx(0.5 * np.linalg.norm(X) ** 2, rel=1e-14)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            objective(np.zeros((2, 2)), np.zeros((2, 3)))


class TestGradient:
    def test_examples(self, rng, A43):
        assert not gradient(A43, A43).any()
        X = rng.standard_normal((4, 3))
        np.testing.assert_array_equal(gradient(np.zeros((4, 3)), X), X)

    def test_finite_differences(self, rng):
        h = 1e-5
        for _ in range(20):
            A, X = rng.standard_normal((2, 4, 3))
            G = gradient(A, X)
            fd = np.empty_like(X)
            for idx in np.ndindex(*X.shape):
                D = np.zeros_like(X)
                D[idx] = h
                fd[idx] = (objective(A, X + D) - objective(A, X - D)) / (2 * h)
            assert np.abs(fd - G).max() <= 1e-6 * max(1.0, np.abs(G).max())


class TestVectorField:
    def test_fixed_at_target(self, A43):
        assert not vector_field(A43, A43).any()

    def test_example(self, A43):
        np.testing.assert_array_equal(vector_field(A43, diag(4, 3, [1, 0, 0])), diag(4, 3, [4, 0, 0]))

    def test_vanishes_at_e_star(self, A43):
        assert not vector_field(A43, diag(4, 3, [3, 2, 0])).any()

    def test_is_quasi_projected_negative_gradient(self, rng):
        for _ in range(100):
            A = rng.standard_normal((5, 4))
            X = random_rank(rng, 5, 4, 2)
            F = vector_field(A, X)
            via_ops = tangent_map(X, tangent_adjoint(X, A - X))
            scale = np.linalg.norm(A - X) * np.linalg.norm(X) ** 2
            assert np.linalg.norm(F - via_ops) <= 1e-12 * scale
            assert np.linalg.norm(F - quasi_project(X, A - X)) <= 1e-12 * scale

    def test_descent(self, rng):
        for _ in range(50):
            A = rng.standard_normal((5, 4))
            X = random_rank(rng, 5, 4, 2)
            F = vector_field(A, X)
            assert np.linalg.norm(F) > 0
            h = 1e-6 / (1 + np.linalg.norm(X)) ** 2
            assert objective(A, X + h * F) < objective(A, X)


class TestLyapunovRate:
    def test_zero_at_target(self, A43):
        assert lyapunov_rate(A43, A43) == 0.0

    @pytest.mark.parametrize("e", [[3, 2, 0], [3, 0, 1], [0, 2, 1], [3, 0, 0]])
    def test_zero_at_equilibria(self, A43, e):
        assert lyapunov_rate(A43, diag(4, 3, e)) == 0.0

    def test_identity_and_sign(self, rng):
        for _ in range(100):
            A = rng.standard_normal((4, 3))
            X = random_rank(rng, 4, 3, 2)
            rate = lyapunov_rate(A, X)
            assert rate < 0
            other = -inner(A - X, vector_field(A, X))
            assert abs(rate - other) <= 1e-12 * abs(other)

    def test_chain_rule(self, rng):
        delta = 1e-5
        for _ in range(10):
            A = rng.standard_normal((4, 3))
            X0 = random_rank(rng, 4, 3, 2) * 0.5
            X1 = rk4_step(A, X0, delta)
            X2 = rk4_step(A, X1, delta)
            fd = (objective(A, X2) - objective(A, X0)) / (2 * delta)
            rate = lyapunov_rate(A, X1)
            assert abs(fd - rate) <= 1e-6 * max(1.0, abs(rate))


class TestFactorFields:
    def test_g(self, A43):
        assert not factor_field_g(A43, A43, np.eye(4)).any()
        X = diag(4, 3, [1, 0, 0])
        np.testing.assert_array_equal(factor_field_g(A43, X, np.eye(4)), diag(4, 4, [2, 0, 0, 0]))

    def test_h(self, A43):
        assert not factor_field_h(A43, A43, np.eye(3)).any()
        X = diag(4, 3, [1, 0, 0])
        np.testing.assert_array_equal(factor_field_h(A43, X, np.eye(3)), diag(3, 3, [-2, 0, 0]))

    def test_linear(self, rng):
        A, X = rng.standard_normal((2, 4, 3))
        G = rng.standard_normal((4, 4))
        H = rng.standard_normal((3, 3))
        np.testing.assert_allclose(factor_field_g(A, X, 2 * G), 2 * factor_field_g(A, X, G), rtol=1e-14)
        np.testing.assert_allclose(factor_field_h(A, X, 2 * H), 2 * factor_field_h(A, X, H), rtol=1e-14)

    def test_shape_errors(self, A43):
        with pytest.raises(ShapeError):
            factor_field_g(A43, A43, np.eye(3))
        with pytest.raises(ShapeError):
            factor_field_h(A43, A43, np.eye(4))

    def test_conjugation_reproduces_field(self, rng):
        # d/dt (G K H^-1) at G = H = I is G' K - K H', which must equal F(K)
        A = rng.standard_normal((4, 3))
        K = random_rank(rng, 4, 3, 2)
        G1 = factor_field_g(A, K, np.eye(4))
        H1 = factor_field_h(A, K, np.eye(3))
        np.testing.assert_allclose(G1 @ K - K @ H1, vector_field(A, K), atol=1e-12 * np.linalg.norm(A) ** 3)


class TestFlowProblem:
    def test_rank_bounds(self, A43):
        with pytest.raises(DomainError):
            FlowProblem(A43, 0)
        with pytest.raises(DomainError):
            FlowProblem(A43, 4)

    def test_nondegenerate_flag(self, A43):
        assert FlowProblem(A43, 2).is_nondegenerate()
        assert not FlowProblem(diag(4, 3, [3, 2, 0]), 2).is_nondegenerate()
