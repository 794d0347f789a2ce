"""Dense SVD by one-sided Jacobi rotations, and best rank-k truncation.

This module is the ground truth the flow is checked against, so it does not
call LAPACK's SVD. Accuracy matters here, speed does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .frobenius import as_matrix, random_orthogonal

__all__ = [
    "SingularSpectrum",
    "svd",
    "svd_truncate",
    "TruncationResult",
    "has_distinct_positive_singular_values",
    "generate_with_spectrum",
    "random_spectrum",
]

_MAX_SWEEPS = 100


@dataclass(frozen=True)
class SingularSpectrum:
    """``source = u @ diag(sigma) @ v.T`` with ``sigma`` sorted descending.

    ``u`` is m x m and ``v`` is n x n; ``sigma`` has ``min(m, n)`` entries.
    """

    sigma: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def diag(self, values=None) -> np.ndarray:
        """The m x n matrix with ``values`` (default ``sigma``) on its diagonal."""
        values = self.sigma if values is None else np.asarray(values, dtype=float)
        m, n = self.shape
        D = np.zeros((m, n))
        r = min(m, n)
        D[np.arange(r), np.arange(r)] = values[:r]
        return D

    def compose(self, values=None) -> np.ndarray:
        return self.u @ self.diag(values) @ self.v.T


def _jacobi_tall(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalize the columns of a tall ``A`` (m >= n).

    Returns ``(W, V)`` with ``A V = W`` and mutually orthogonal columns of W.
    """
    W = A.copy()
    n = W.shape[1]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return W, V
    tol = 1e-14 * scale
    eps = np.finfo(float).eps
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi, wj = W[:, i], W[:, j]
                alpha = wi @ wi
                beta = wj @ wj
                gamma = wi @ wj
                # the absolute floor stops sweeps over negligible columns
                if abs(gamma) <= max(eps * math.sqrt(alpha * beta), tol * eps * scale):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                new_i = c * wi - s * wj
                new_j = s * wi + c * wj
                W[:, i], W[:, j] = new_i, new_j
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
        if not rotated:
            break
    return W, V


def _complete_basis(Ur: np.ndarray, m: int) -> np.ndarray:
    """Extend orthonormal columns ``Ur`` (m x r) to an m x m orthogonal matrix."""
    r = Ur.shape[1]
    if r == m:
        return Ur
    # project the identity off span(Ur) twice, then orthonormalize what's left
    C = np.eye(m)
    for _ in range(2):
        C = C - Ur @ (Ur.T @ C)
    norms = np.linalg.norm(C, axis=0)
    order = np.argsort(-norms, kind="stable")
    extra = []
    for j in order:
        c = C[:, j].copy()
        for b in [Ur[:, i] for i in range(r)] + extra:
            c -= (b @ c) * b
        for b in [Ur[:, i] for i in range(r)] + extra:
            c -= (b @ c) * b
        nrm = np.linalg.norm(c)
        if nrm > 1e-8:
            extra.append(c / nrm)
        if len(extra) == m - r:
            break
    return np.column_stack([Ur] + extra)


def _fix_signs(U: np.ndarray, V: np.ndarray, r: int) -> None:
    """Flip paired columns so the largest-magnitude entry of each U column is positive."""
    for j in range(U.shape[1]):
        col = U[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            U[:, j] = -col
            if j < V.shape[1] and j < r:
                V[:, j] = -V[:, j]
    # columns of V beyond the paired ones get the same convention on their own
    for j in range(r, V.shape[1]):
        col = V[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            V[:, j] = -col


def svd(A) -> SingularSpectrum:
    """Full SVD of a real matrix by one-sided Jacobi.

    Examples
    --------
    >>> s = svd([[0.0, 2.0], [1.0, 0.0]])
    >>> s.sigma.tolist()
    [2.0, 1.0]
    """
    A = as_matrix(A, "A")
    m, n = A.shape
    if m < n:
        t = svd(A.T)
        # A = (u S v^T)^T = v S^T u^T; swapping factors keeps the sign rule on u
        U, V = t.v.copy(), t.u.copy()
        r = min(m, n)
        _fix_signs(U, V, r)
        return SingularSpectrum(t.sigma, U, V)

    W, V = _jacobi_tall(A)
    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    W = W[:, order]
    V = V[:, order]

    smax = sigma[0] if n else 0.0
    cutoff = smax * max(m, n) * np.finfo(float).eps
    nonzero = int(np.sum(sigma > cutoff)) if smax > 0 else 0
    Ur = W[:, :nonzero] / sigma[:nonzero]
    U = _complete_basis(Ur, m)
    _fix_signs(U, V, n)
    return SingularSpectrum(sigma, U, V)


@dataclass(frozen=True)
class TruncationResult:
    """Best rank-k approximation; ``degenerate`` when ``rank(A) <= k``."""

    matrix: np.ndarray
    degenerate: bool
    tail_objective: float


def svd_truncate(A, k: int, *, rel_tol: float = 1e-12, full: bool = False):
    """Keep the ``k`` largest singular values of ``A`` and zero the rest.

    Parameters
    ----------
    A : array_like
        Real m x n matrix.
    k : int
        Target rank, ``1 <= k <= min(m, n)``.
    rel_tol : float
        Singular values at or below ``rel_tol * sigma_1`` count as zero when
        deciding whether ``A`` already has rank at most ``k``.
    full : bool
        Return a :class:`TruncationResult` instead of the bare matrix.

    Returns
    -------
    ndarray or TruncationResult
        If ``rank(A) <= k`` the input is returned unchanged and flagged
        degenerate.
    """
    A = as_matrix(A, "A")
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise DomainError(f"rank must lie in [1, {min(m, n)}], got {k}")
    spectrum = svd(A)
    s = spectrum.sigma
    rank = int(np.sum(s > rel_tol * s[0])) if s[0] > 0 else 0
    if rank <= k:
        out = TruncationResult(A.copy(), True, 0.0)
    else:
        kept = s.copy()
        kept[k:] = 0.0
        out = TruncationResult(spectrum.compose(kept), False, 0.5 * float(np.sum(s[k:] ** 2)))
    return out if full else out.matrix


def _distinct_positive(sigma: np.ndarray, rel_gap: float) -> bool:
    if sigma.size == 0 or sigma[0] <= 0:
        return False
    thresh = rel_gap * sigma[0]
    if sigma[-1] <= thresh:
        return False
    return bool(np.all(sigma[:-1] - sigma[1:] > thresh))


def has_distinct_positive_singular_values(A, rel_gap: float = 1e-8) -> bool:
    """Genericity test: all gaps and the smallest value exceed ``rel_gap * sigma_1``."""
    if rel_gap <= 0:
        raise DomainError("rel_gap must be positive")
    return _distinct_positive(svd(A).sigma, rel_gap)


def generate_with_spectrum(m: int, n: int, sigma, seed: int) -> np.ndarray:
    """Random m x n matrix ``U diag(sigma) V^T`` with Haar-like orthogonal U, V.

    Deterministic in ``seed``.
    """
    sigma = np.asarray(sigma, dtype=float).ravel()
    if m < 1 or n < 1:
        raise ShapeError(f"invalid size {m}x{n}")
    if sigma.size != min(m, n):
        raise ShapeError(f"need {min(m, n)} singular values for a {m}x{n} matrix, got {sigma.size}")
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise DomainError("sigma must be non-negative and sorted descending")
    rng = np.random.default_rng(seed)
    U = random_orthogonal(m, rng)
    V = random_orthogonal(n, rng)
    D = np.zeros((m, n))
    r = min(m, n)
    D[np.arange(r), np.arange(r)] = sigma
    return U @ D @ V.T


def random_spectrum(n: int, rng: np.random.Generator, min_gap: float = 0.1) -> np.ndarray:
    """Descending singular values with every gap (and the smallest value) at least
    ``min_gap * sigma_1``.

    ``sigma_1`` is drawn from [1, 3]; the slack above the minimum gaps is split
    with a flat Dirichlet draw.
    """
    if not 0 < min_gap * n <= 1:
        raise DomainError(f"cannot fit {n} gaps of relative size {min_gap}")
    w = rng.dirichlet(np.ones(n))
    gaps = min_gap + (1.0 - min_gap * n) * w
    sigma = np.cumsum(gaps[::-1])[::-1]
    return sigma * rng.uniform(1.0, 3.0)
