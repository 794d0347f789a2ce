"""Frobenius inner-product arithmetic on dense real matrices.

Every matrix in the package is a two-dimensional ``float64`` numpy array.
:func:`as_matrix` is the single entry point that enforces that (and rejects
non-finite entries); the other modules call it on their inputs.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ShapeError


def as_matrix(X, name: str = "matrix") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array, raising on anything else."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def check_same_shape(X: np.ndarray, Y: np.ndarray, what: str = "operands") -> None:
    if X.shape != Y.shape:
        raise ShapeError(f"{what} differ in shape: {X.shape} vs {Y.shape}")


class TangentPair(NamedTuple):
    """A pair ``(left, right)`` with ``left`` m x m and ``right`` n x n.

    This is the domain of the tangent map ``(X, Y) -> X B + B Y`` and the range
    of its adjoint.
    """

    left: np.ndarray
    right: np.ndarray


def inner(X, Y) -> float:
    """Frobenius inner product ``trace(X Y^T) = sum_ij X_ij Y_ij``."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    check_same_shape(X, Y)
    # ravel + dot avoids forming X @ Y.T
    return float(np.dot(X.ravel(), Y.ravel()))


def frob_norm(X) -> float:
    X = as_matrix(X, "X")
    return math.sqrt(inner(X, X))


def pair_inner(P, Q) -> float:
    """Inner product on pairs: ``<P.left, Q.left> + <P.right, Q.right>``."""
    P = TangentPair(*P)
    Q = TangentPair(*Q)
    return inner(P.left, Q.left) + inner(P.right, Q.right)


def pair_norm(P) -> float:
    return math.sqrt(pair_inner(P, P))


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormalize an n x n standard normal matrix.

    Column signs are fixed against the diagonal of R so the result does not
    depend on the QR implementation's sign choices.
    """
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d
