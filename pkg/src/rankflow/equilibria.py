"""Equilibria of the quasi-gradient flow and their stability.

Work happens in the frame where the target is ``Diag(sigma)``: rotate with
the singular vectors of ``A``. For distinct positive singular values every
equilibrium there is diagonal with ``e_i`` equal to ``sigma_i`` or 0, and
the linearization decouples into 1x1 and 2x2 blocks on elementary matrices.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, DomainError
from .flow import vector_field
from .frobenius import as_matrix, check_same_shape, frob_norm
from .integrator import numerical_rank
from .manifold import BasisIndex, tangent_basis_at_diagonal
from .svd import SingularSpectrum, _distinct_positive

__all__ = [
    "SingularSpectrum",
    "Mode",
    "Witness",
    "EquilibriumReport",
    "equilibrium_residual",
    "quasi_commuting_residual",
    "linearization_apply",
    "linearization_eigenvalues",
    "linearization_matrix",
    "finite_difference_jacobian",
    "enumerate_equilibria",
    "classify",
    "match_to_equilibrium",
    "REL_GAP",
]

REL_GAP = 1e-8
MAX_N = 20
MAX_SUBSETS = 200_000
EQUILIBRIUM_TOL = 1e-8


@dataclass(frozen=True)
class Mode:
    """One eigenvalue of the linearization and the direction it belongs to.

    ``kind`` is one of

    - ``"diag"``: ``E^{pp}``
    - ``"sym"``: ``E^{pq} + E^{qp}`` (eigenvalue ``-a + b``)
    - ``"antisym"``: ``E^{pq} - E^{qp}`` (eigenvalue ``-a - b``)
    - ``"single"``: ``E^{pq}`` alone (only one of the pair is tangent, or
      the position lies outside the square block)
    """

    value: float
    kind: str
    p: int
    q: int

    def as_dict(self) -> dict:
        return {"value": self.value, "kind": self.kind, "p": self.p, "q": self.q}


@dataclass(frozen=True)
class Witness:
    """Unstable direction ``E^{pq} + E^{qp}`` with ``e_p = 0``, ``e_q = sigma_q``, ``p < q``."""

    p: int
    q: int
    value: float


@dataclass(frozen=True)
class EquilibriumReport:
    e: np.ndarray
    shape: tuple[int, int]
    support: frozenset[int]
    residual_equilibrium: float
    residual_quasi_commuting: tuple[float, float]
    eigenvalues: list[Mode] = field(default_factory=list)
    verdict: str = "degenerate"
    witness: Witness | None = None

    @property
    def rank(self) -> int:
        return len(self.support)

    def matrix(self) -> np.ndarray:
        """The equilibrium as an m x n matrix in the aligned frame."""
        m, n = self.shape
        E = np.zeros((m, n))
        r = min(m, n)
        E[np.arange(r), np.arange(r)] = self.e[:r]
        return E

    def eigenvalue_values(self) -> np.ndarray:
        return np.array([mode.value for mode in self.eigenvalues])

    def as_dict(self) -> dict:
        return {
            "e": [float(x) for x in self.e],
            "support": sorted(self.support),
            "verdict": self.verdict,
            "residual_equilibrium": self.residual_equilibrium,
            "residual_quasi_commuting": list(self.residual_quasi_commuting),
            "eigenvalues": [mode.as_dict() for mode in self.eigenvalues],
            "witness": None
            if self.witness is None
            else {"p": self.witness.p, "q": self.witness.q, "value": self.witness.value},
        }


def equilibrium_residual(A, E) -> float:
    """``max(||A E^T - E E^T||, ||E^T A - E^T E||)``; zero exactly at equilibria."""
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    check_same_shape(A, E, "A and E")
    return max(frob_norm(A @ E.T - E @ E.T), frob_norm(E.T @ A - E.T @ E))


def quasi_commuting_residual(A, E) -> tuple[float, float]:
    """``(||A E^T - E A^T||, ||A^T E - E^T A||)``, both zero at any equilibrium."""
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    check_same_shape(A, E, "A and E")
    return frob_norm(A @ E.T - E @ A.T), frob_norm(A.T @ E - E.T @ A)


def linearization_apply(A, E, X) -> np.ndarray:
    """Derivative of the vector field at an equilibrium ``E`` applied to ``X``.

    ``(A - E) X^T E + E X^T (A - E) - X E^T E - E E^T X``. The two terms of
    the full derivative that contain ``(A - E) E^T`` or ``E^T (A - E)`` are
    dropped, so the result is only the Jacobian when ``E`` is an equilibrium.
    """
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    X = as_matrix(X, "X")
    check_same_shape(A, E, "A and E")
    check_same_shape(A, X, "A and X")
    res = equilibrium_residual(A, E)
    if res > EQUILIBRIUM_TOL * (1.0 + frob_norm(A)):
        warnings.warn(f"E is not an equilibrium (residual {res:.3g})", RuntimeWarning, stacklevel=2)
    R = A - E
    return R @ X.T @ E + E @ X.T @ R - X @ (E.T @ E) - (E @ E.T) @ X


def linearization_matrix(A, E, basis=None) -> np.ndarray:
    """Matrix of :func:`linearization_apply` in the elementary basis ``basis``.

    Column ``c`` holds the ``basis`` coordinates of ``linearization_apply(A, E,
    E^{basis[c]})``. Defaults to the tangent basis at a diagonal ``E``.
    """
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    if basis is None:
        basis = _default_basis(E)
    return _basis_matrix(lambda X: linearization_apply(A, E, X), E.shape, basis)


def finite_difference_jacobian(A, E, basis=None, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of the vector field at ``E`` in ``basis``."""
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    if basis is None:
        basis = _default_basis(E)

    def directional(X):
        return (vector_field(A, E + step * X) - vector_field(A, E - step * X)) / (2.0 * step)

    return _basis_matrix(directional, E.shape, basis)


def _default_basis(E: np.ndarray) -> list:
    return tangent_basis_at_diagonal(_pad(np.diag(E), E.shape[1]), E.shape[0])


def _basis_matrix(op, shape, basis) -> np.ndarray:
    rows = np.array([b[0] - 1 for b in basis], dtype=int)
    cols = np.array([b[1] - 1 for b in basis], dtype=int)
    M = np.empty((len(basis), len(basis)))
    for c, (p, q) in enumerate(basis):
        X = np.zeros(shape)
        X[p - 1, q - 1] = 1.0
        M[:, c] = op(X)[rows, cols]
    return M


def _check_equilibrium_vector(sigma: np.ndarray, e: np.ndarray) -> None:
    if e.shape != sigma.shape:
        raise DomainError(f"e has {e.size} entries, sigma has {sigma.size}")
    scale = sigma.max() if sigma.size else 0.0
    for i, (s, x) in enumerate(zip(sigma, e)):
        if x != 0.0 and abs(x - s) > 1e-12 * max(scale, 1.0):
            raise DomainError(f"e[{i + 1}] = {x} is neither 0 nor sigma[{i + 1}] = {s}")


def _tall_eigenvalues(sigma: np.ndarray, e: np.ndarray, m: int) -> list[Mode]:
    n = sigma.size
    tangent = set(tangent_basis_at_diagonal(e, m))
    modes: list[Mode] = []
    for i in range(n):
        if e[i] != 0.0:
            modes.append(Mode(float(2.0 * e[i] * (sigma[i] - 2.0 * e[i])), "diag", i + 1, i + 1))
    for i, j in itertools.combinations(range(n), 2):
        a = e[i] ** 2 + e[j] ** 2
        b = (sigma[i] - e[i]) * e[j] + e[i] * (sigma[j] - e[j])
        ij = BasisIndex(i + 1, j + 1) in tangent
        ji = BasisIndex(j + 1, i + 1) in tangent
        if ij and ji:
            modes.append(Mode(float(-a + b), "sym", i + 1, j + 1))
            modes.append(Mode(float(-a - b), "antisym", i + 1, j + 1))
        elif ij or ji:
            p, q = (i + 1, j + 1) if ij else (j + 1, i + 1)
            modes.append(Mode(float(-a), "single", p, q))
    for i in range(n, m):
        for j in range(n):
            if e[j] != 0.0:
                modes.append(Mode(float(-e[j] ** 2), "single", i + 1, j + 1))
    return modes


def linearization_eigenvalues(sigma, e, m: int) -> list[Mode]:
    """Closed-form eigenvalues of the linearization at ``Diag(e)`` (m x len(sigma)).

    With ``a = e_i^2 + e_j^2`` and ``b = (sigma_i - e_i) e_j + e_i (sigma_j - e_j)``
    the modes are ``2 e_i (sigma_i - 2 e_i)`` on ``E^{ii}``, ``-a +/- b`` on
    ``E^{ij} +/- E^{ji}``, and ``-e_j^2`` on rows below the square block. When
    ``m < len(sigma)`` the transposed problem is solved and the indices are
    swapped back.
    """
    sigma = np.asarray(sigma, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    n = sigma.size
    if m >= n:
        _check_equilibrium_vector(sigma, e)
        return _tall_eigenvalues(sigma, e, m)
    # wide: the diagonal has m entries; analyze the n x m transpose
    if np.any(sigma[m:] != 0.0) or np.any(e[m:] != 0.0):
        raise DomainError("an m x n diagonal with m < n has only m diagonal entries")
    _check_equilibrium_vector(sigma[:m], e[:m])
    modes = _tall_eigenvalues(sigma[:m], e[:m], n)
    return [
        Mode(md.value, md.kind, md.p, md.q) if md.kind in ("sym", "antisym", "diag")
        else Mode(md.value, md.kind, md.q, md.p)
        for md in modes
    ]


def _require_generic(sigma: np.ndarray) -> None:
    if not _distinct_positive(sigma, REL_GAP):
        raise DegeneracyError(
            "singular values are not distinct and positive "
            f"(relative gap threshold {REL_GAP:g}): {sigma.tolist()}"
        )


def _witness(sigma: np.ndarray, e: np.ndarray) -> Witness | None:
    k = int(np.count_nonzero(e))
    missing = [p for p in range(k) if e[p] == 0.0]
    if not missing:
        return None
    p = missing[0]
    q = next(j for j in range(p + 1, e.size) if e[j] != 0.0)
    return Witness(p + 1, q + 1, float((sigma[p] - sigma[q]) * sigma[q]))


def _report(sigma: np.ndarray, e: np.ndarray, shape: tuple[int, int]) -> EquilibriumReport:
    m, n = shape
    r = min(m, n)
    A = np.zeros(shape)
    E = np.zeros(shape)
    A[np.arange(r), np.arange(r)] = sigma
    E[np.arange(r), np.arange(r)] = e
    modes = linearization_eigenvalues(_pad(sigma, n), _pad(e, n), m)
    values = np.array([md.value for md in modes])
    if values.size and np.any(values == 0.0):
        verdict = "degenerate"
    elif np.all(values < 0.0):
        verdict = "stable"
    else:
        verdict = "unstable"
    witness = _witness(sigma, e) if verdict == "unstable" else None
    return EquilibriumReport(
        e=e.copy(),
        shape=shape,
        support=frozenset(int(i) + 1 for i in np.flatnonzero(e)),
        residual_equilibrium=equilibrium_residual(A, E),
        residual_quasi_commuting=quasi_commuting_residual(A, E),
        eigenvalues=modes,
        verdict=verdict,
        witness=witness,
    )


def _pad(v: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: v.size] = v
    return out


def classify(spectrum: SingularSpectrum, e, m: int | None = None) -> EquilibriumReport:
    """Eigenvalues, verdict and (if unstable) a witness for the equilibrium ``Diag(e)``."""
    sigma = np.asarray(spectrum.sigma, dtype=float)
    _require_generic(sigma)
    shape = spectrum.shape if m is None else (m, spectrum.shape[1])
    e = np.asarray(e, dtype=float).ravel()
    r = min(shape)
    if e.size != r:
        raise DomainError(f"e must have {r} entries")
    _check_equilibrium_vector(sigma[:r], e)
    return _report(sigma[:r], e, shape)


def enumerate_equilibria(spectrum: SingularSpectrum, k: int) -> list[EquilibriumReport]:
    """All ``C(r, k)`` rank-k equilibria, ``r = min(m, n)``, in lexicographic support order."""
    sigma = np.asarray(spectrum.sigma, dtype=float)
    _require_generic(sigma)
    r = sigma.size
    if not 1 <= k <= r:
        raise DomainError(f"k must lie in [1, {r}], got {k}")
    if r > MAX_N or math.comb(r, k) > MAX_SUBSETS:
        raise DomainError(f"enumeration too large: C({r}, {k}) subsets")
    reports = []
    for subset in itertools.combinations(range(r), k):
        e = np.zeros(r)
        e[list(subset)] = sigma[list(subset)]
        reports.append(_report(sigma, e, spectrum.shape))
    return reports


def match_to_equilibrium(
    spectrum: SingularSpectrum, X, tol: float, k: int | None = None
) -> EquilibriumReport | None:
    """Closest rank-k equilibrium to ``u^T X v`` if it lies within ``tol``.

    ``k`` defaults to the numerical rank of ``X`` at relative tolerance 1e-8.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    X = as_matrix(X, "X")
    if X.shape != spectrum.shape:
        raise DomainError(f"X has shape {X.shape}, spectrum is for {spectrum.shape}")
    Y = spectrum.u.T @ X @ spectrum.v
    if k is None:
        k = numerical_rank(X, 1e-8)
    if k == 0:
        return None
    best, best_d = None, math.inf
    for rep in enumerate_equilibria(spectrum, k):
        d = frob_norm(Y - rep.matrix())
        if d < best_d:
            best, best_d = rep, d
    return best if best_d <= tol else None
