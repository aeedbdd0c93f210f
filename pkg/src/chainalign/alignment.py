"""Permutation recovery between a known chain and a permuted copy of it.

``exact_recover`` handles the noiseless case; ``ppl`` works from an observed
trajectory of the permuted chain, keeping only states whose stationary mass
clears a threshold ``t`` before aligning singular vectors with a linear
assignment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    DimensionError,
    DomainError,
    NumericalError,
    PreconditionError,
    RecoveryError,
    ThresholdMismatchError,
    ValidationError,
)
from .mdp import (
    PermutationMap,
    StochasticPolicy,
    TabularMDP,
    imitation_loss,
    induced_chain,
    stationary_distribution,
)
from .spectral import (
    DEFAULT_TOL_ALPHA,
    DEFAULT_TOL_BETA,
    FriendlinessCertificate,
    closed_classes,
    friendliness,
    rescale,
    scc_restrict,
)

ASCENDING = "ascending"
COMPLETION_RULES = (ASCENDING,)
VERIFY_TOL = 1e-8


@dataclass(frozen=True)
class AssignmentProblem:
    """Square cost matrix; ``cost[i, j]`` is the price of mapping row ``i`` to column ``j``."""

    cost: np.ndarray

    def __post_init__(self):
        C = np.array(self.cost, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise DimensionError(f"assignment cost must be square, got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValidationError("assignment cost has non-finite entries")
        object.__setattr__(self, "cost", C)

    @classmethod
    def from_embeddings(cls, target: np.ndarray, source: np.ndarray) -> "AssignmentProblem":
        """``cost[i, j] = ||target[i] - source[j]||^2`` over row embeddings."""
        target = np.asarray(target, dtype=float)
        source = np.asarray(source, dtype=float)
        diff = target[:, None, :] - source[None, :, :]
        return cls(np.einsum("ijk,ijk->ij", diff, diff))

    def total(self, assignment) -> float:
        a = np.asarray(assignment)
        return float(self.cost[np.arange(a.size), a].sum())


@dataclass(frozen=True)
class PplConfig:
    t: float
    tol_alpha: float = DEFAULT_TOL_ALPHA
    tol_beta: float = DEFAULT_TOL_BETA
    completion_rule: str = ASCENDING
    mu_hat_rule: str = "transitions"

    def __post_init__(self):
        if not self.t > 0:
            raise ValidationError("threshold t must be positive")
        if self.completion_rule not in COMPLETION_RULES:
            raise ValidationError(f"unknown completion rule {self.completion_rule!r}")


@dataclass
class AlignmentResult:
    pi_hat: PermutationMap
    matched_indices: np.ndarray
    policy_hat: StochasticPolicy
    certificate: FriendlinessCertificate
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pi_hat": self.pi_hat.forward.tolist(),
            "matched_indices": self.matched_indices.tolist(),
            "certificate": self.certificate.to_dict(),
            "diagnostics": self.diagnostics,
        }


def _lsa_cost(C: np.ndarray) -> float:
    if C.shape[0] == 0:
        return 0.0
    r, c = linear_sum_assignment(C)
    return float(C[r, c].sum())


def hungarian(problem: AssignmentProblem, tie_tol: float = 1e-10) -> PermutationMap:
    """Minimum-cost perfect matching, lexicographically smallest among optima.

    The optimum comes from ``scipy.optimize.linear_sum_assignment``.  Rows are
    then fixed one at a time to the smallest column that still admits an
    optimal completion, which pins down a unique answer when the optimum is
    not unique.
    """
    C = problem.cost
    n = C.shape[0]
    if n == 0:
        return PermutationMap(np.array([], dtype=np.int64))
    rows, cols = linear_sum_assignment(C)
    first = np.empty(n, dtype=np.int64)
    first[rows] = cols
    best = float(C[rows, cols].sum())
    slack = tie_tol * max(1.0, abs(best))

    assignment = np.empty(n, dtype=np.int64)
    free_cols = list(range(n))
    spent = 0.0
    on_first = True
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        chosen = None
        for j in free_cols:
            if on_first and j == first[i]:
                chosen = j
                break
            remaining = [c for c in free_cols if c != j]
            total = spent + C[i, j] + _lsa_cost(C[np.ix_(rest_rows, remaining)])
            if total <= best + slack:
                chosen = j
                break
        if chosen is None:  # pragma: no cover - the scipy optimum is always feasible
            raise NumericalError("tie-breaking failed to find an optimal completion")
        on_first = on_first and chosen == first[i]
        assignment[i] = chosen
        spent += C[i, chosen]
        free_cols.remove(chosen)
    return PermutationMap(assignment)


def brute_force_assignment(problem: AssignmentProblem) -> tuple[PermutationMap, float]:
    """Exhaustive search; returns the lexicographically first optimum."""
    C = problem.cost
    n = C.shape[0]
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        cost = C[np.arange(n), perm].sum()
        if cost < best_cost - 1e-12 * max(1.0, abs(best_cost) if np.isfinite(best_cost) else 1.0):
            best_perm, best_cost = perm, cost
    return PermutationMap(np.array(best_perm)), float(best_cost)


def complete_permutation(partial: dict[int, int], n: int, rule: str = ASCENDING) -> PermutationMap:
    """Extend an injective partial map ``target index -> source index`` to a permutation.

    The ascending rule sends the unmatched target indices, in increasing
    order, to the unused source indices in increasing order.
    """
    if rule not in COMPLETION_RULES:
        raise ValidationError(f"unknown completion rule {rule!r}")
    values = list(partial.values())
    if len(set(values)) != len(values):
        raise ValidationError("partial map is not injective")
    for k, v in partial.items():
        if not (0 <= k < n and 0 <= v < n):
            raise ValidationError(f"partial map entry {k}->{v} out of range for n={n}")
    free_src = iter(sorted(set(range(n)) - set(values)))
    forward = np.empty(n, dtype=np.int64)
    for i in range(n):
        forward[i] = partial[i] if i in partial else next(free_src)
    return PermutationMap(forward)


def _align_rows(V_target: np.ndarray, V_source: np.ndarray) -> PermutationMap:
    return hungarian(AssignmentProblem.from_embeddings(V_target, V_source))


def exact_recover(
    M: np.ndarray,
    M_permuted: np.ndarray,
    p0: np.ndarray,
    p0_permuted: np.ndarray | None = None,
    tol_alpha: float = DEFAULT_TOL_ALPHA,
    tol_beta: float = DEFAULT_TOL_BETA,
) -> PermutationMap:
    """Recover ``Pi`` with ``M_permuted = Pi.T @ M @ Pi`` for a friendly chain ``M``.

    Both chains are restricted to their recurrent classes; singular vectors
    of the two rescaled matrices are matched row by row.  Without
    ``p0_permuted`` the target's recurrent set is taken to be all of its
    closed classes, which is only valid when the same holds for the source.
    Transient states, if any, are filled in ascending order and the final
    answer must pass ``||Pi.T M Pi - M_permuted||_F <= 1e-8``.
    """
    M = np.asarray(M, dtype=float)
    M_permuted = np.asarray(M_permuted, dtype=float)
    if M.shape != M_permuted.shape:
        raise DimensionError("chains have different shapes")
    n = M.shape[0]

    idx_src, sub_src = scc_restrict(M, p0)
    if p0_permuted is not None:
        idx_tgt, sub_tgt = scc_restrict(M_permuted, p0_permuted)
    else:
        all_closed = np.sort(np.concatenate(closed_classes(M)))
        if not np.array_equal(all_closed, idx_src):
            raise PreconditionError(
                "source has recurrent classes outside supp(p0); pass p0_permuted"
            )
        idx_tgt = np.sort(np.concatenate(closed_classes(M_permuted)))
        sub_tgt = M_permuted[np.ix_(idx_tgt, idx_tgt)]
    if idx_src.size != idx_tgt.size:
        raise RecoveryError("recurrent sets of the two chains differ in size")

    mu_src = stationary_distribution(M, p0)[idx_src]
    if p0_permuted is not None:
        mu_tgt = stationary_distribution(M_permuted, p0_permuted)[idx_tgt]
    else:
        mu_tgt = stationary_distribution(sub_tgt, np.full(idx_tgt.size, 1.0 / idx_tgt.size))
    s_src = rescale(sub_src, mu_src)
    cert = friendliness(s_src, tol_alpha, tol_beta)
    if not cert.is_friendly:
        raise PreconditionError(
            f"source chain is not friendly (alpha={cert.alpha:.3g}, beta={cert.beta:.3g})"
        )
    s_tgt = rescale(sub_tgt, mu_tgt)
    local = _align_rows(s_tgt.V, s_src.V)
    partial = {int(idx_tgt[i]): int(idx_src[local.forward[i]]) for i in range(idx_tgt.size)}
    pi_hat = complete_permutation(partial, n)
    err = float(np.linalg.norm(pi_hat.conjugate(M) - M_permuted))
    if err > VERIFY_TOL:
        raise RecoveryError(f"verification failed: ||Pi^T M Pi - M'||_F = {err:.3g}")
    return pi_hat


def brute_force_recover(M: np.ndarray, M_permuted: np.ndarray) -> tuple[PermutationMap, float]:
    """Exhaustive Frobenius minimiser over all permutations (small chains only)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    best, best_err = None, np.inf
    for perm in itertools.permutations(range(n)):
        p = np.array(perm)
        err = np.linalg.norm(M[np.ix_(p, p)] - M_permuted)
        if err < best_err:
            best, best_err = p, err
    return PermutationMap(best), float(best_err)


def ppl_from_estimates(
    mdp: TabularMDP,
    policy: StochasticPolicy,
    config: PplConfig,
    M_hat: np.ndarray,
    mu_hat: np.ndarray,
    m: int | None = None,
) -> AlignmentResult:
    """Permuted policy learning given estimates of the target chain and its stationary vector.

    Passing the exact permuted chain and its stationary vector gives the
    infinite-sample limit of :func:`ppl`.
    """
    n = mdp.n_states
    M_hat = np.asarray(M_hat, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if M_hat.shape != (n, n) or mu_hat.shape != (n,):
        raise DimensionError("estimates do not match the number of states")

    M = induced_chain(mdp, policy)
    mu = stationary_distribution(M, mdp.p0, gamma=mdp.gamma)
    t = config.t
    I_t = np.flatnonzero(mu >= t)
    I_hat = np.flatnonzero(mu_hat >= t)
    if I_t.size == 0:
        raise DomainError(f"threshold t={t} exceeds every stationary mass")
    if I_t.size != I_hat.size:
        raise ThresholdMismatchError(
            f"|I_t| = {I_t.size} but the empirical threshold set has {I_hat.size} states"
        )
    if np.any(mu_hat[I_hat] <= 0):  # pragma: no cover - mu_hat >= t > 0
        raise NumericalError("unvisited state inside the empirical threshold set")

    src = rescale(M[np.ix_(I_t, I_t)], mu[I_t])
    tgt = rescale(M_hat[np.ix_(I_hat, I_hat)], mu_hat[I_hat])
    src_cert = friendliness(src, config.tol_alpha, config.tol_beta)
    cert = friendliness(tgt, config.tol_alpha, config.tol_beta)

    local = _align_rows(tgt.V, src.V)
    partial = {int(I_hat[i]): int(I_t[local.forward[i]]) for i in range(I_hat.size)}
    pi_hat = complete_permutation(partial, n, config.completion_rule)
    diagnostics = {
        "m": m,
        "n_matched": int(I_t.size),
        "gap": float(np.min(np.abs(mu - t))),
        "gap_hat": float(np.min(np.abs(mu_hat - t))),
        "source_alpha": src_cert.alpha,
        "source_beta": src_cert.beta,
        "friendly": cert.is_friendly,
    }
    return AlignmentResult(
        pi_hat=pi_hat,
        matched_indices=I_hat,
        policy_hat=policy.transported(pi_hat),
        certificate=cert,
        diagnostics=diagnostics,
    )


def ppl(
    mdp: TabularMDP,
    policy: StochasticPolicy,
    config: PplConfig,
    trajectory,
) -> AlignmentResult:
    """Permuted policy learning from a state-only trajectory of the target chain."""
    from .sampling import estimate

    traj = np.asarray(trajectory, dtype=np.int64)
    if traj.size < 2:
        raise ValidationError("trajectory needs at least two states")
    emp = estimate(traj, mdp.n_states, mu_rule=config.mu_hat_rule)
    return ppl_from_estimates(mdp, policy, config, emp.M_hat, emp.mu_hat, m=emp.m)


def threshold_set(mu: np.ndarray, t: float) -> np.ndarray:
    return np.flatnonzero(np.asarray(mu) >= t)


@dataclass(frozen=True)
class BoundCheck:
    loss: float
    bound: float
    holds: bool
    hypothesis_met: bool


def imitation_bound(t: float, n_states: int, gamma: float) -> float:
    return 2.0 * t * n_states / (1.0 - gamma) ** 2


def imitation_loss_bound_check(
    mdp: TabularMDP,
    policy: StochasticPolicy,
    pi_star: PermutationMap,
    pi_hat: PermutationMap,
    t: float,
) -> BoundCheck:
    """Compare the loss of transporting ``policy`` by ``pi_hat`` with ``2 t |S| / (1 - gamma)^2``.

    The bound only applies when ``pi_hat`` and ``pi_star`` agree on the
    preimage of every source state with stationary mass at least ``t``;
    ``hypothesis_met`` reports whether that is the case.
    """
    mu = stationary_distribution(induced_chain(mdp, policy), mdp.p0, gamma=mdp.gamma)
    I_t = threshold_set(mu, t)
    inv_hat = pi_hat.inverse().forward
    inv_star = pi_star.inverse().forward
    hypothesis_met = bool(np.array_equal(inv_hat[I_t], inv_star[I_t]))
    loss = imitation_loss(mdp, policy, pi_star, policy.transported(pi_hat))
    bound = imitation_bound(t, mdp.n_states, mdp.gamma)
    return BoundCheck(loss, bound, loss <= bound + 1e-9, hypothesis_met)
