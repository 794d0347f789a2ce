import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rankflow import (
    DomainError,
    FlowConfig,
    FlowProblem,
    PreconditionError,
    Status,
    integrate,
    integrate_with_factors,
    numerical_rank,
    objective,
    svd_truncate,
)
from rankflow.integrator import random_start, rk4_step

from conftest import diag


def scalar_reference(a, x0, t):
    sol = solve_ivp(
        lambda _, x: 2.0 * (a - x) * x * x, (0.0, t), [x0], rtol=1e-13, atol=1e-15, method="DOP853"
    )
    return float(sol.y[0, -1])


class TestRK4Step:
    def test_fixed_point_at_target(self, rng):
        A = rng.standard_normal((4, 3))
        np.testing.assert_array_equal(rk4_step(A, A, 0.1), A)

    def test_fixed_point_at_equilibrium(self, A43):
        E = diag(4, 3, [3, 0, 1])
        np.testing.assert_allclose(rk4_step(A43, E, 0.05), E, atol=1e-15)

    def test_fifth_order_local_error(self):
        a, x0 = 2.0, 0.5
        errs = []
        for h in (0.04, 0.02):
            X = rk4_step([[a]], [[x0]], h)[0, 0]
            errs.append(abs(X - scalar_reference(a, x0, h)))
        ratio = errs[0] / errs[1]
        assert 24.0 < ratio < 40.0

    def test_rejects_bad_step(self, A43):
        with pytest.raises(DomainError):
            rk4_step(A43, A43, 0.0)


class TestIntegrate:
    def test_start_at_optimum(self, A43):
        X0 = svd_truncate(A43, 2)
        traj = integrate(FlowProblem(A43, 2), X0)
        assert traj.status is Status.CONVERGED
        assert traj.steps <= 1

    def test_converges_to_truncation(self, A43, rng):
        X0 = random_start(A43, 2, rng)
        traj = integrate(FlowProblem(A43, 2), X0)
        assert traj.status is Status.CONVERGED
        np.testing.assert_allclose(traj.final.X, diag(4, 3, [3, 2, 0]), atol=1e-6)

    def test_wide_target(self, rng):
        A = rng.standard_normal((3, 6))
        traj = integrate(FlowProblem(A, 1), random_start(A, 1, rng))
        assert traj.status is Status.CONVERGED
        X = svd_truncate(A, 1)
        assert np.linalg.norm(traj.final.X - X) <= 1e-6 * np.linalg.norm(A)

    def test_low_rank_target(self, rng):
        A = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
        traj = integrate(FlowProblem(A, 2), A)
        assert traj.status is Status.CONVERGED
        assert traj.steps == 0

    def test_wrong_rank_start(self, A43):
        with pytest.raises(PreconditionError):
            integrate(FlowProblem(A43, 2), diag(4, 3, [1, 0, 0]))
        with pytest.raises(PreconditionError):
            integrate(FlowProblem(A43, 2), np.zeros((4, 3)))

    def test_invariants(self, rng):
        A = rng.standard_normal((6, 4))
        X0 = random_start(A, 2, rng)
        traj = integrate(FlowProblem(A, 2), X0, FlowConfig(record_every=1))
        assert traj.status is Status.CONVERGED
        assert traj.lyapunov_increases() == 0
        assert all(s.numerical_rank == 2 for s in traj.samples)
        bound = np.linalg.norm(A) + np.linalg.norm(X0 - A)
        assert max(np.linalg.norm(s.X) for s in traj.samples) <= bound
        assert np.all(np.diff(traj.times) > 0)
        assert traj.f_accepted.size == traj.steps + 1
        assert traj.final.f == pytest.approx(objective(A, svd_truncate(A, 2)), rel=1e-8)

    def test_max_steps(self, A43, rng):
        traj = integrate(FlowProblem(A43, 2), random_start(A43, 2, rng), FlowConfig(max_steps=5))
        assert traj.status is Status.MAX_STEPS_REACHED
        assert traj.steps == 5
        assert traj.final.t > 0

    def test_step_underflow(self, A43, rng):
        cfg = FlowConfig(min_step=1e-3, initial_step=1e-3, local_tol=1e-30)
        traj = integrate(FlowProblem(A43, 2), random_start(A43, 2, rng), cfg)
        assert traj.status is Status.STEP_UNDERFLOW

    def test_retraction(self, rng):
        A = rng.standard_normal((5, 4))
        cfg = FlowConfig(retraction_period=5)
        traj = integrate(FlowProblem(A, 2), random_start(A, 2, rng), cfg)
        assert traj.status is Status.CONVERGED
        assert np.linalg.norm(traj.final.X - svd_truncate(A, 2)) <= 1e-6 * np.linalg.norm(A)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            FlowConfig(grad_tol=0.0)
        with pytest.raises(DomainError):
            FlowConfig(min_step=1.0, max_step=0.5)
        with pytest.raises(DomainError):
            FlowConfig(initial_step=10.0)
        with pytest.raises(DomainError):
            FlowConfig(max_steps=0)

    def test_scalar_against_reference(self):
        traj = integrate(FlowProblem([[2.0]], 1), [[0.5]], FlowConfig(record_every=1, max_steps=40))
        for s in traj.samples[1:]:
            assert s.X[0, 0] == pytest.approx(scalar_reference(2.0, 0.5, s.t), abs=1e-8)


class TestFactors:
    def test_equilibrium_start(self, A43):
        E = diag(4, 3, [3, 2, 0])
        run = integrate_with_factors(FlowProblem(A43, 2), E, None, 0.5)
        assert run.conclusive
        assert run.residual <= 1e-14
        np.testing.assert_array_equal(run.factors.g, np.eye(4))
        np.testing.assert_array_equal(run.factors.h, np.eye(3))
        assert run.trajectory.status is Status.HORIZON_REACHED

    def test_residual_small(self, rng):
        A = rng.standard_normal((3, 2))
        K = random_start(A, 1, rng)
        run = integrate_with_factors(FlowProblem(A, 1), K, None, 0.1)
        assert run.conclusive
        assert run.trajectory.final.t == 0.1
        assert run.residual <= 1e-6 * np.linalg.norm(K)

    def test_scalar_factors(self):
        run = integrate_with_factors(FlowProblem([[2.0]], 1), [[0.5]], None, 0.3)
        x = scalar_reference(2.0, 0.5, 0.3)
        assert run.trajectory.final.X[0, 0] == pytest.approx(x, abs=1e-8)
        assert run.factors.g[0, 0] * 0.5 / run.factors.h[0, 0] == pytest.approx(x, abs=1e-8)

    def test_bad_horizon(self, A43):
        with pytest.raises(DomainError):
            integrate_with_factors(FlowProblem(A43, 2), diag(4, 3, [3, 2, 0]), None, 0.0)


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 2)), 1e-8) == 0
    assert numerical_rank(np.diag([1.0, 1e-9, 0.0]), 1e-8) == 1
    assert numerical_rank(np.diag([1.0, 1e-7, 0.0]), 1e-8) == 2
    with pytest.raises(DomainError):
        numerical_rank(np.eye(2), 0.0)
