"""The distance objective and the rank-preserving quasi-gradient flow.

For a target ``A`` the objective is ``f(X) = 1/2 ||X - A||^2`` with gradient
``X - A``. Pushing the negative gradient through the quasi-projection at ``X``
gives the vector field

    F(X) = (A - X) X^T X + X X^T (A - X),

which is tangent to the set of matrices with the rank of ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .frobenius import as_matrix, check_same_shape, inner, pair_inner
from .manifold import tangent_adjoint


@dataclass(frozen=True)
class FlowProblem:
    """Approximate ``target`` by a matrix of rank ``rank``."""

    target: np.ndarray
    rank: int

    def __post_init__(self):
        A = as_matrix(self.target, "target")
        object.__setattr__(self, "target", A)
        if not 1 <= self.rank <= min(A.shape):
            raise DomainError(f"rank must lie in [1, {min(A.shape)}], got {self.rank}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.target.shape

    def is_nondegenerate(self, rel_tol: float = 1e-8) -> bool:
        """True when the target's numerical rank exceeds the requested rank."""
        from .integrator import numerical_rank

        return numerical_rank(self.target, rel_tol) > self.rank


@dataclass(frozen=True)
class FactorPair:
    """Invertible factors ``G`` (m x m) and ``H`` (n x n) with ``X = G K H^-1``."""

    g: np.ndarray
    h: np.ndarray

    @classmethod
    def identity(cls, m: int, n: int) -> "FactorPair":
        return cls(np.eye(m), np.eye(n))

    def condition(self) -> tuple[float, float]:
        return float(np.linalg.cond(self.g)), float(np.linalg.cond(self.h))


def _pair(A, X):
    A = as_matrix(A, "A")
    X = as_matrix(X, "X")
    check_same_shape(A, X, "A and X")
    return A, X


def objective(A, X) -> float:
    """Half the squared Frobenius distance between ``X`` and ``A``."""
    A, X = _pair(A, X)
    D = X - A
    return 0.5 * inner(D, D)


def gradient(A, X) -> np.ndarray:
    A, X = _pair(A, X)
    return X - A


def vector_field(A, X) -> np.ndarray:
    """``(A - X) X^T X + X X^T (A - X)``."""
    A, X = _pair(A, X)
    R = A - X
    return R @ (X.T @ X) + (X @ X.T) @ R


def lyapunov_rate(A, X) -> float:
    """Rate of change of the objective along the flow, ``-||L_X^*(X - A)||^2``."""
    A, X = _pair(A, X)
    P = tangent_adjoint(X, X - A)
    return -pair_inner(P, P)


def factor_field_g(A, X, G) -> np.ndarray:
    """Right-hand side ``(A - X) X^T G`` of the left factor flow."""
    A, X = _pair(A, X)
    G = as_matrix(G, "G")
    m = X.shape[0]
    if G.shape != (m, m):
        raise ShapeError(f"G must be {m}x{m}, got {G.shape}")
    return (A - X) @ X.T @ G


def factor_field_h(A, X, H) -> np.ndarray:
    """Right-hand side ``-X^T (A - X) H`` of the right factor flow."""
    A, X = _pair(A, X)
    H = as_matrix(H, "H")
    n = X.shape[1]
    if H.shape != (n, n):
        raise ShapeError(f"H must be {n}x{n}, got {H.shape}")
    return -(X.T @ (A - X)) @ H
