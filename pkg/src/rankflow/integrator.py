"""Adaptive RK4 integration of ``X' = F(X)`` with a Lyapunov guard.

Step size is controlled by step doubling. An accepted step must also not
increase the objective beyond what rounding the new state can account for;
the objective change is evaluated as ``<D, X - A> + ||D||^2 / 2`` with ``D``
the step increment, which avoids the cancellation of subtracting two nearly
equal objective values.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DomainError, PreconditionError
from .flow import FactorPair, FlowProblem
from .frobenius import as_matrix, check_same_shape
from .svd import svd_truncate

log = logging.getLogger(__name__)

__all__ = [
    "FlowConfig",
    "Status",
    "Sample",
    "Trajectory",
    "FactorRun",
    "rk4_step",
    "integrate",
    "integrate_with_factors",
    "numerical_rank",
    "random_start",
]

COND_LIMIT = 1e12
_EPS = np.finfo(float).eps


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_STEPS_REACHED = "max_steps_reached"
    STEP_UNDERFLOW = "step_underflow"
    RANK_DRIFT_DETECTED = "rank_drift_detected"
    # only produced by fixed-horizon runs
    HORIZON_REACHED = "horizon_reached"


@dataclass(frozen=True)
class FlowConfig:
    """Integration settings.

    ``initial_step=None`` means ``1e-2 / (1 + ||A||)^2``, resolved by
    :meth:`resolved` once the target is known.
    """

    initial_step: float | None = None
    min_step: float = 1e-12
    max_step: float = 1.0
    grad_tol: float = 1e-10
    max_steps: int = 200_000
    rank_tol: float = 1e-8
    retraction_period: int = 0
    record_every: int = 10
    # per-step error budget, relative to 1 + ||X||; see README on rank drift
    local_tol: float = 1e-11

    def __post_init__(self):
        for name in ("min_step", "max_step", "grad_tol", "rank_tol", "local_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.max_steps < 1 or self.record_every < 1 or self.retraction_period < 0:
            raise DomainError("max_steps and record_every must be >= 1, retraction_period >= 0")
        if self.min_step > self.max_step:
            raise DomainError("min_step exceeds max_step")
        if self.initial_step is not None and not (
            self.min_step <= self.initial_step <= self.max_step
        ):
            raise DomainError("initial_step must lie in [min_step, max_step]")

    def resolved(self, A: np.ndarray) -> "FlowConfig":
        if self.initial_step is not None:
            return self
        h0 = 1e-2 / (1.0 + np.linalg.norm(A)) ** 2
        h0 = min(max(h0, self.min_step), self.max_step)
        return FlowConfig(**{**self.__dict__, "initial_step": h0})


@dataclass(frozen=True)
class Sample:
    t: float
    X: np.ndarray
    f: float
    grad_norm: float
    numerical_rank: int


@dataclass
class Trajectory:
    """Recorded flow states plus per-step diagnostics.

    ``grad_norm`` is the Frobenius norm of the vector field at the sample.
    ``f_accepted`` holds the directly evaluated objective after every accepted
    step (index 0 is the initial state).
    """

    samples: list[Sample]
    status: Status
    steps: int = 0
    rejected_error: int = 0
    rejected_lyapunov: int = 0
    f_accepted: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def lyapunov_increases(self, rel_tol: float = 1e-12) -> int:
        """Accepted steps where the objective rose by more than ``rel_tol * f``."""
        f = self.f_accepted
        if f.size < 2:
            return 0
        rise = f[1:] - f[:-1]
        return int(np.sum(rise > rel_tol * np.maximum(f[:-1], np.finfo(float).tiny)))


def numerical_rank(X, rel_tol: float) -> int:
    """Number of singular values above ``rel_tol`` times the largest one."""
    if rel_tol <= 0:
        raise DomainError("rel_tol must be positive")
    s = np.linalg.svd(as_matrix(X, "X"), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def _field(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    R = A - X
    return R @ (X.T @ X) + (X @ X.T) @ R


def _rk4(A, X, h, k1=None):
    if k1 is None:
        k1 = _field(A, X)
    k2 = _field(A, X + 0.5 * h * k1)
    k3 = _field(A, X + 0.5 * h * k2)
    k4 = _field(A, X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(A, X, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of size ``h``."""
    A = as_matrix(A, "A")
    X = as_matrix(X, "X")
    check_same_shape(A, X, "A and X")
    if not h > 0:
        raise DomainError("step size must be positive")
    return _rk4(A, X, h)


def _next_step(h: float, err: float, tol: float) -> float:
    if err == 0.0:
        return 2.0 * h
    return h * min(2.0, max(0.2, 0.9 * (tol / err) ** 0.2))


def _stable_step(A: np.ndarray, X: np.ndarray) -> float:
    """Largest step keeping RK4 inside its real stability interval.

    ``2||X||^2 + 4||A - X|| ||X||`` (spectral norms) bounds the operator norm
    of the Jacobian of F at X. Near an equilibrium the local error estimate
    alone cannot see a slowly growing unstable oscillation below its own
    tolerance, so this cap is what lets the run reach ``grad_tol``.
    """
    nx = np.linalg.norm(X, 2)
    rho = 2.0 * nx * nx + 4.0 * np.linalg.norm(A - X, 2) * nx
    return math.inf if rho == 0.0 else 2.5 / rho


def random_start(A, k: int, rng: np.random.Generator) -> np.ndarray:
    """Generic rank-k start: truncated Gaussian matrix scaled to ``||A||``."""
    A = as_matrix(A, "A")
    R = rng.standard_normal(A.shape)
    X0 = svd_truncate(R, k)
    scale = np.linalg.norm(A)
    if scale > 0:
        X0 = X0 * (scale / np.linalg.norm(X0))
    return X0


def _sample(A, X, t, F, rank_tol) -> Sample:
    D = X - A
    return Sample(
        t=t,
        X=X.copy(),
        f=0.5 * float(np.vdot(D, D)),
        grad_norm=float(np.linalg.norm(F)),
        numerical_rank=numerical_rank(X, rank_tol),
    )


def integrate(problem: FlowProblem, X0, config: FlowConfig | None = None) -> Trajectory:
    """Follow the flow from ``X0`` until the vector field is small.

    Stops with ``converged`` once ``||F(X)|| <= grad_tol * (1 + ||A||)``. A
    recorded sample whose numerical rank differs from ``problem.rank`` ends
    the run with ``rank_drift_detected``.

    Raises
    ------
    PreconditionError
        If ``X0`` does not have numerical rank ``problem.rank``.
    """
    A = problem.target
    k = problem.rank
    X = as_matrix(X0, "X0").copy()
    check_same_shape(A, X, "target and X0")
    cfg = (config or FlowConfig()).resolved(A)
    r0 = numerical_rank(X, cfg.rank_tol)
    if r0 != k:
        raise PreconditionError(f"X0 has numerical rank {r0}, expected {k}")

    stop = cfg.grad_tol * (1.0 + np.linalg.norm(A))
    t = 0.0
    h = max(cfg.min_step, min(cfg.initial_step, _stable_step(A, X)))
    F = _field(A, X)
    samples = [_sample(A, X, t, F, cfg.rank_tol)]
    f_hist = [samples[0].f]
    traj = Trajectory(samples, Status.MAX_STEPS_REACHED)

    def finish(status):
        traj.status = status
        traj.f_accepted = np.asarray(f_hist)
        log.debug("integrate: %s after %d steps, t=%.6g", status.value, traj.steps, t)
        return traj

    if samples[0].grad_norm <= stop:
        return finish(Status.CONVERGED)

    while traj.steps < cfg.max_steps:
        tol = cfg.local_tol * (1.0 + np.linalg.norm(X))
        full = _rk4(A, X, h, F)
        mid = _rk4(A, X, 0.5 * h, F)
        half = _rk4(A, mid, 0.5 * h)
        err = np.linalg.norm(half - full) / 15.0
        if not np.isfinite(err) or err > tol:
            traj.rejected_error += 1
            h *= 0.2 if not np.isfinite(err) else max(0.2, 0.9 * (tol / err) ** 0.2)
            if h < cfg.min_step:
                return finish(Status.STEP_UNDERFLOW)
            continue

        D = half - X
        R = X - A
        df = float(np.vdot(D, R)) + 0.5 * float(np.vdot(D, D))
        # storing X + D rounds each entry by up to eps/2 |X_ij|, which moves f by
        # up to eps ||X|| ||X - A||; near convergence the true decrease is smaller
        if df > 4.0 * _EPS * np.linalg.norm(half) * np.linalg.norm(R):
            traj.rejected_lyapunov += 1
            h *= 0.5
            if h < cfg.min_step:
                return finish(Status.STEP_UNDERFLOW)
            continue

        X = half
        t += h
        traj.steps += 1
        if cfg.retraction_period and traj.steps % cfg.retraction_period == 0:
            X = svd_truncate(X, k)
        F = _field(A, X)
        R = X - A
        f_hist.append(0.5 * float(np.vdot(R, R)))

        gnorm = np.linalg.norm(F)
        done = gnorm <= stop
        if done or traj.steps % cfg.record_every == 0:
            s = _sample(A, X, t, F, cfg.rank_tol)
            samples.append(s)
            if s.numerical_rank != k:
                log.warning("rank drift: rank %d at t=%.6g", s.numerical_rank, t)
                return finish(Status.RANK_DRIFT_DETECTED)
        if done:
            return finish(Status.CONVERGED)
        h = min(cfg.max_step, _stable_step(A, X), _next_step(h, err, tol))
        h = max(cfg.min_step, h)

    if samples[-1].t != t:
        samples.append(_sample(A, X, t, F, cfg.rank_tol))
    return finish(Status.MAX_STEPS_REACHED)


class FactorRun(NamedTuple):
    """Result of :func:`integrate_with_factors`.

    ``residual`` is ``||X(T) - G(T) K H(T)^-1||``; ``conclusive`` is False when
    ``H(T)`` was too ill-conditioned for the residual to mean anything.
    """

    trajectory: Trajectory
    factors: FactorPair
    residual: float
    conclusive: bool


def _joint_field(A, X, G, H):
    R = A - X
    RXt = R @ X.T
    XtR = X.T @ R
    return RXt @ X + X @ XtR, RXt @ G, -XtR @ H


def _joint_rk4(A, state, h):
    def add(s, d, c):
        return tuple(a + c * b for a, b in zip(s, d))

    k1 = _joint_field(A, *state)
    k2 = _joint_field(A, *add(state, k1, 0.5 * h))
    k3 = _joint_field(A, *add(state, k2, 0.5 * h))
    k4 = _joint_field(A, *add(state, k3, h))
    return tuple(
        s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for s, a, b, c, d in zip(state, k1, k2, k3, k4)
    )


def integrate_with_factors(
    problem: FlowProblem, K, config: FlowConfig | None, horizon: float
) -> FactorRun:
    """Integrate ``X``, ``G`` and ``H`` together from ``(K, I, I)`` up to ``horizon``.

    ``G' = (A - X) X^T G`` and ``H' = -X^T (A - X) H`` keep ``X = G K H^-1``,
    which certifies rank preservation independently of any SVD.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    A = problem.target
    K = as_matrix(K, "K")
    check_same_shape(A, K, "target and K")
    cfg = (config or FlowConfig()).resolved(A)
    r0 = numerical_rank(K, cfg.rank_tol)
    if r0 != problem.rank:
        raise PreconditionError(f"K has numerical rank {r0}, expected {problem.rank}")
    m, n = A.shape

    state = (K.copy(), np.eye(m), np.eye(n))
    t = 0.0
    h = min(cfg.initial_step, horizon)
    samples = [_sample(A, state[0], t, _field(A, state[0]), cfg.rank_tol)]
    f_hist = [samples[0].f]
    traj = Trajectory(samples, Status.HORIZON_REACHED)

    while t < horizon:
        if traj.steps >= cfg.max_steps:
            traj.status = Status.MAX_STEPS_REACHED
            break
        h = min(h, horizon - t)
        full = _joint_rk4(A, state, h)
        half = _joint_rk4(A, _joint_rk4(A, state, 0.5 * h), 0.5 * h)
        err = max(
            np.linalg.norm(a - b) / (15.0 * (1.0 + np.linalg.norm(s)))
            for a, b, s in zip(half, full, state)
        )
        if not np.isfinite(err) or err > cfg.local_tol:
            traj.rejected_error += 1
            h *= 0.2 if not np.isfinite(err) else max(0.2, 0.9 * (cfg.local_tol / err) ** 0.2)
            if h < cfg.min_step:
                traj.status = Status.STEP_UNDERFLOW
                break
            continue
        state = half
        # snap onto the horizon so float accumulation cannot leave a sliver step
        t = horizon if horizon - (t + h) <= 1e-15 * horizon else t + h
        traj.steps += 1
        X = state[0]
        R = X - A
        f_hist.append(0.5 * float(np.vdot(R, R)))
        if traj.steps % cfg.record_every == 0 or t >= horizon:
            samples.append(_sample(A, X, t, _field(A, X), cfg.rank_tol))
        h = min(cfg.max_step, _next_step(h, err, cfg.local_tol))

    traj.f_accepted = np.asarray(f_hist)
    X, G, H = state
    factors = FactorPair(G, H)
    if not (np.all(np.isfinite(H)) and np.linalg.cond(H) <= COND_LIMIT):
        log.warning("factor certificate inconclusive: H is ill-conditioned")
        return FactorRun(traj, factors, math.nan, False)
    # G K H^-1 = (H^-T (G K)^T)^T, via LU with partial pivoting
    lu = scipy.linalg.lu_factor(H)
    GKHinv = scipy.linalg.lu_solve(lu, (G @ K).T, trans=1).T
    residual = float(np.linalg.norm(X - GKHinv))
    return FactorRun(traj, factors, residual, True)
