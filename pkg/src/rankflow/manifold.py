"""Geometry of the fixed-rank orbit ``{G B H^-1}`` at a point ``B``.

The tangent space at ``B`` is the range of ``L_B(X, Y) = X B + B Y``. Its
adjoint with respect to the Frobenius product is ``Z -> (Z B^T, B^T Z)``, and
the composition ``L_B o L_B^*`` (the quasi-projection) sends any ambient
direction to a tangent one.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError
from .frobenius import TangentPair, as_matrix, check_same_shape

__all__ = [
    "TangentPair",
    "BasisIndex",
    "tangent_map",
    "tangent_adjoint",
    "quasi_project",
    "quasi_projection_matrix",
    "tangent_dim",
    "tangent_basis_at_diagonal",
    "elementary",
]


class BasisIndex(NamedTuple):
    """1-based position ``(p, q)`` of the elementary matrix ``E^{pq}``."""

    p: int
    q: int


def elementary(m: int, n: int, idx) -> np.ndarray:
    """The m x n matrix with a one at 1-based position ``idx`` and zeros elsewhere."""
    p, q = idx
    if not (1 <= p <= m and 1 <= q <= n):
        raise DomainError(f"index {(p, q)} out of range for {m}x{n}")
    E = np.zeros((m, n))
    E[p - 1, q - 1] = 1.0
    return E


def tangent_map(B, P) -> np.ndarray:
    """Apply ``L_B``: ``P.left @ B + B @ P.right``."""
    B = as_matrix(B, "B")
    left = as_matrix(P[0], "P.left")
    right = as_matrix(P[1], "P.right")
    m, n = B.shape
    if left.shape != (m, m) or right.shape != (n, n):
        raise ShapeError(
            f"tangent pair shapes {left.shape}, {right.shape} do not fit B of shape {B.shape}"
        )
    return left @ B + B @ right


def tangent_adjoint(B, Z) -> TangentPair:
    """Apply ``L_B^*``: ``Z -> (Z B^T, B^T Z)``."""
    B = as_matrix(B, "B")
    Z = as_matrix(Z, "Z")
    check_same_shape(B, Z, "B and Z")
    return TangentPair(Z @ B.T, B.T @ Z)


def quasi_project(B, Z) -> np.ndarray:
    """``Z B^T B + B B^T Z``, the tangent vector ``L_B(L_B^*(Z))``."""
    B = as_matrix(B, "B")
    Z = as_matrix(Z, "Z")
    check_same_shape(B, Z, "B and Z")
    return Z @ (B.T @ B) + (B @ B.T) @ Z


def quasi_projection_matrix(B) -> np.ndarray:
    """Explicit (mn) x (mn) matrix of ``Z -> quasi_project(B, Z)``.

    Column ``j`` is the row-major flattening of ``quasi_project(B, E)`` where
    ``E`` is the j-th elementary matrix in row-major order. Intended for
    brute-force checks at small sizes.
    """
    B = as_matrix(B, "B")
    m, n = B.shape
    Q = np.empty((m * n, m * n))
    for j in range(m * n):
        E = np.zeros(m * n)
        E[j] = 1.0
        Q[:, j] = quasi_project(B, E.reshape(m, n)).ravel()
    return Q


def tangent_dim(m: int, n: int, k: int) -> int:
    """Dimension ``k^2 + k(m-k) + k(n-k)`` of the rank-k orbit in m x n matrices."""
    if m < 1 or n < 1 or k < 0:
        raise DomainError(f"invalid sizes m={m}, n={n}, k={k}")
    if k > min(m, n):
        raise DomainError(f"rank {k} exceeds min({m}, {n})")
    return k * k + k * (m - k) + k * (n - k)


def tangent_basis_at_diagonal(e, m: int) -> list[BasisIndex]:
    """Elementary directions spanning the tangent space at ``Diag(e)`` (m x n).

    Returns every 1-based ``(p, q)`` with ``e_p != 0`` or ``e_q != 0``, where
    ``e_p`` counts as zero for ``p > n``. Order is row-major.
    """
    e = np.asarray(e, dtype=float).ravel()
    n = e.size
    if m < 1:
        raise DomainError("m must be positive")
    if m < n and np.any(e[m:] != 0.0):
        raise DomainError("a diagonal m x n matrix has only min(m, n) diagonal entries")

    def nonzero(i: int) -> bool:
        return i < n and e[i] != 0.0

    return [
        BasisIndex(p + 1, q + 1)
        for p in range(m)
        for q in range(n)
        if nonzero(p) or nonzero(q)
    ]
