"""Rescaled transition matrices, oriented SVDs and friendliness certificates.

For an ergodic chain ``M`` with stationary distribution ``mu`` the rescaled
matrix is ``L = D^{1/2} M D^{-1/2}`` with ``D = diag(mu)``.  Its right singular
vectors are oriented so that every column of ``V`` has a nonnegative sum; a
chain is *friendly* when the singular values are distinct and every column sum
is strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, NumericalError, ValidationError

ORIENTATION_TIE_TOL = 1e-12
DEFAULT_TOL_ALPHA = 1e-8
DEFAULT_TOL_BETA = 1e-8


@dataclass(frozen=True)
class ChainSummary:
    M: np.ndarray
    mu: np.ndarray
    D: np.ndarray
    L: np.ndarray
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def reconstruction_error(self) -> float:
        return float(np.linalg.norm(self.U @ np.diag(self.S) @ self.V.T - self.L))

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(),
            "mu": self.mu.tolist(),
            "L": self.L.tolist(),
            "U": self.U.tolist(),
            "singular_values": self.S.tolist(),
            "V": self.V.tolist(),
        }


@dataclass(frozen=True)
class FriendlinessCertificate:
    alpha: float
    beta: float
    tol_alpha: float
    tol_beta: float

    @property
    def is_friendly(self) -> bool:
        return self.alpha > self.tol_alpha and self.beta > self.tol_beta

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "tol_alpha": self.tol_alpha,
            "tol_beta": self.tol_beta,
            "is_friendly": self.is_friendly,
        }


def _check_square(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    return M


def closed_classes(M: np.ndarray) -> list[np.ndarray]:
    """Strongly connected components with no outgoing edge, each sorted ascending.

    Components are ordered by their smallest member.
    """
    M = _check_square(M)
    adj = M > 0
    _, labels = connected_components(adj, directed=True, connection="strong")
    comps: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(i)
    closed = []
    for members in comps.values():
        idx = np.array(members)
        outside = np.ones(M.shape[0], dtype=bool)
        outside[idx] = False
        if not adj[np.ix_(idx, outside)].any():
            closed.append(idx)
    closed.sort(key=lambda c: int(c[0]))
    return closed


def scc_restrict(M: np.ndarray, p0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the recurrent classes meeting ``supp(p0)`` and the principal submatrix.

    Only closed (recurrent) classes carry stationary mass, so these are the
    states on which the chain started from ``p0`` is ergodic.  Indices are
    returned in ascending order.
    """
    M = _check_square(M)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (M.shape[0],):
        raise ValidationError("p0 length does not match chain size")
    support = p0 > 0
    keep = [c for c in closed_classes(M) if support[c].any()]
    if not keep:
        raise NumericalError("no recurrent class intersects the support of p0")
    idx = np.sort(np.concatenate(keep))
    return idx, M[np.ix_(idx, idx)]


def orient(V: np.ndarray, U: np.ndarray | None = None):
    """Flip columns of ``V`` (and matching columns of ``U``) so ``V.T @ 1 >= 0``.

    Columns whose sum is within ``ORIENTATION_TIE_TOL`` of zero are left as-is.
    """
    V = np.array(V, dtype=float, copy=True)
    sums = V.sum(axis=0)
    flip = sums < -ORIENTATION_TIE_TOL
    V[:, flip] *= -1
    if U is None:
        return V
    U = np.array(U, dtype=float, copy=True)
    U[:, flip] *= -1
    return V, U


def oriented_svd(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD ``A = U diag(S) V^T`` with descending ``S`` and oriented ``V``."""
    try:
        U, S, Vt = np.linalg.svd(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(str(exc)) from exc
    # numpy returns descending order; a stable argsort keeps index order on ties
    order = np.argsort(-S, kind="stable")
    U, S, V = U[:, order], S[order], Vt.T[:, order]
    V, U = orient(V, U)
    return U, S, V


def rescaled_matrix(M: np.ndarray, mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise DomainError("rescaling needs a strictly positive stationary vector")
    root = np.sqrt(mu)
    return root[:, None] * np.asarray(M, dtype=float) / root[None, :]


def rescale(M: np.ndarray, mu: np.ndarray) -> ChainSummary:
    """Build the :class:`ChainSummary` of ``M`` given its stationary vector ``mu``.

    ``M`` need not be stochastic: principal submatrices of a chain are
    rescaled without renormalising their rows.
    """
    M = _check_square(M)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (M.shape[0],):
        raise ValidationError("mu length does not match chain size")
    L = rescaled_matrix(M, mu)
    U, S, V = oriented_svd(L)
    return ChainSummary(M=M, mu=mu, D=np.diag(mu), L=L, U=U, S=S, V=V)


def friendliness(
    summary: ChainSummary,
    tol_alpha: float = DEFAULT_TOL_ALPHA,
    tol_beta: float = DEFAULT_TOL_BETA,
) -> FriendlinessCertificate:
    """Singular-value gap ``alpha`` and minimal column sum ``beta`` of the oriented ``V``.

    A single-state chain has no consecutive pair of singular values, so its
    gap is ``inf``.  Orientation ties (column sum within 1e-12 of zero) give
    ``beta = 0``.
    """
    S = summary.S
    alpha = float(np.min(S[:-1] - S[1:])) if S.size > 1 else float("inf")
    sums = summary.V.sum(axis=0)
    sums = np.where(np.abs(sums) <= ORIENTATION_TIE_TOL, 0.0, sums)
    beta = float(np.min(sums))
    return FriendlinessCertificate(alpha, beta, tol_alpha, tol_beta)


def pseudospectral_gap(M: np.ndarray, mu: np.ndarray, k_max: int | None = None) -> float:
    """Pseudospectral gap truncated to ``k <= k_max`` (default ``2 n``).

    ``(D^{-1} M^T D)^k M^k`` is similar to ``L_k^T L_k`` where
    ``L_k = D^{1/2} M^k D^{-1/2}``, so its second eigenvalue is the squared
    second singular value of ``L_k``.  Truncating the maximum over ``k`` can
    only underestimate the gap.
    """
    M = _check_square(M)
    n = M.shape[0]
    if k_max is None:
        k_max = 2 * n
    if k_max < 1:
        raise DomainError("k_max must be at least 1")
    if n == 1:
        return 1.0
    root = np.sqrt(np.asarray(mu, dtype=float))
    if np.any(root <= 0):
        raise DomainError("pseudospectral gap needs an ergodic chain with mu > 0")
    best = -np.inf
    Mk = np.eye(n)
    for k in range(1, k_max + 1):
        Mk = Mk @ M
        Lk = root[:, None] * Mk / root[None, :]
        try:
            s = np.linalg.svd(Lk, compute_uv=False)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalError(str(exc)) from exc
        best = max(best, (1.0 - s[1] ** 2) / k)
    return float(best)


def d_p0(p0: np.ndarray, mu: np.ndarray) -> float:
    """``sum_i p0_i^2 / mu_i`` with ``0/0 = 0``."""
    p0 = np.asarray(p0, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any((p0 > 0) & (mu <= 0)):
        raise DomainError("p0 puts mass on a state with zero stationary mass")
    mask = p0 > 0
    return float(np.sum(p0[mask] ** 2 / mu[mask]))
