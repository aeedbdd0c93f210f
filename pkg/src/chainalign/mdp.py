"""Tabular MDPs, policies, state permutations and occupancy measures.

Conventions:

* ``dynamics[a, s, s2] = P(s2 | s, a)``.
* ``policy.probs[s, a] = phi(a | s)``.
* A :class:`PermutationMap` stores ``forward[i] = j`` meaning target state
  ``i`` corresponds to source state ``j``.  Its matrix ``Pi`` has
  ``Pi[forward[i], i] = 1`` so that ``Pi.T @ M @ Pi`` is the chain seen from
  the target side.
* Occupancy measures are normalised discounted visitation distributions and
  the imitation loss is the plain L1 distance between occupancies (twice the
  textbook total variation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericalError, ValidationError
from .spectral import scc_restrict

PROB_TOL = 1e-9


def _check_prob_rows(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite entries")
    if np.any(arr < -PROB_TOL):
        raise ValidationError(f"{what} has negative entries")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > PROB_TOL):
        raise ValidationError(f"{what} rows do not sum to 1")


@dataclass(frozen=True)
class TabularMDP:
    dynamics: np.ndarray
    p0: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.array(self.dynamics, dtype=float)
        p0 = np.array(self.p0, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise DimensionError(f"dynamics must have shape (A, S, S), got {P.shape}")
        if p0.shape != (P.shape[1],):
            raise DimensionError("p0 length does not match number of states")
        _check_prob_rows(P, "dynamics")
        _check_prob_rows(p0, "p0")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma}")
        P.setflags(write=False)
        p0.setflags(write=False)
        object.__setattr__(self, "dynamics", P)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.dynamics.shape[1]

    @property
    def n_actions(self) -> int:
        return self.dynamics.shape[0]

    def permuted(self, pi: "PermutationMap") -> "TabularMDP":
        """Target MDP whose state ``i`` behaves like source state ``pi.forward[i]``."""
        if pi.size != self.n_states:
            raise DimensionError("permutation size does not match MDP")
        f = pi.forward
        return TabularMDP(self.dynamics[:, f][:, :, f], self.p0[f], self.gamma)


@dataclass(frozen=True)
class StochasticPolicy:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise DimensionError("policy must be a (S, A) matrix")
        _check_prob_rows(probs, "policy")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "StochasticPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def block_matrix(self) -> np.ndarray:
        """Stacked diagonal blocks ``[Phi_a1; ...; Phi_aA]`` of shape ``(A*S, S)``."""
        return np.vstack([np.diag(self.probs[:, a]) for a in range(self.n_actions)])

    def transported(self, pi: "PermutationMap") -> "StochasticPolicy":
        """The policy that plays, at target state ``i``, what this one plays at ``pi.forward[i]``."""
        if pi.size != self.n_states:
            raise DimensionError("permutation size does not match policy")
        return StochasticPolicy(self.probs[pi.forward])


@dataclass(frozen=True)
class PermutationMap:
    forward: np.ndarray

    def __post_init__(self):
        f = np.array(self.forward, dtype=np.int64)
        if f.ndim != 1 or not np.array_equal(np.sort(f), np.arange(f.size)):
            raise ValidationError(f"not a permutation: {self.forward!r}")
        f.setflags(write=False)
        object.__setattr__(self, "forward", f)

    @property
    def size(self) -> int:
        return int(self.forward.size)

    @classmethod
    def identity(cls, n: int) -> "PermutationMap":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PermutationMap":
        return cls(rng.permutation(n))

    @classmethod
    def from_matrix(cls, Pi: np.ndarray) -> "PermutationMap":
        Pi = np.asarray(Pi)
        return cls(np.argmax(Pi, axis=0))

    def matrix(self) -> np.ndarray:
        return np.eye(self.size)[:, self.forward]

    def inverse(self) -> "PermutationMap":
        return PermutationMap(np.argsort(self.forward))

    def conjugate(self, M: np.ndarray) -> np.ndarray:
        """``Pi.T @ M @ Pi`` computed by indexing."""
        f = self.forward
        return np.asarray(M)[np.ix_(f, f)]

    def __eq__(self, other) -> bool:
        return isinstance(other, PermutationMap) and np.array_equal(self.forward, other.forward)

    def __hash__(self) -> int:
        return hash(tuple(self.forward.tolist()))

    def __repr__(self) -> str:
        return f"PermutationMap({self.forward.tolist()})"


@dataclass(frozen=True)
class OccupancyMeasure:
    rho: np.ndarray
    mu: np.ndarray


def _check_pair(mdp: TabularMDP, policy: StochasticPolicy) -> None:
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"({mdp.n_states}, {mdp.n_actions})"
        )


def policy_chain(mdp: TabularMDP, policy: StochasticPolicy) -> np.ndarray:
    """``P_phi[s, s2] = sum_a phi(a|s) P(s2|s, a)``."""
    _check_pair(mdp, policy)
    return np.einsum("sa,ast->st", policy.probs, mdp.dynamics)


def induced_chain(mdp: TabularMDP, policy: StochasticPolicy) -> np.ndarray:
    """State chain of ``policy`` with a ``1 - gamma`` restart to ``p0`` folded in."""
    P_phi = policy_chain(mdp, policy)
    g = mdp.gamma
    return (1.0 - g) * mdp.p0[None, :] + g * P_phi


def _check_chain(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"chain must be square, got {M.shape}")
    _check_prob_rows(M, "chain")
    return M


def stationary_power(
    M: np.ndarray,
    p0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Power iteration on the lazy chain ``(I + M) / 2`` started from ``p0``.

    The lazy chain has the same stationary vectors and is aperiodic, so the
    iteration converges for periodic inputs too.
    """
    M = _check_chain(M)
    lazy = 0.5 * (np.eye(M.shape[0]) + M)
    mu = np.asarray(p0, dtype=float).copy()
    for _ in range(max_iter):
        nxt = mu @ lazy
        if np.abs(nxt - mu).sum() < tol:
            return nxt / nxt.sum()
        mu = nxt
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def _solve_restart(M: np.ndarray, p0: np.ndarray, gamma: float) -> np.ndarray | None:
    if gamma == 0.0:
        return p0.copy()
    P_phi = (M - (1.0 - gamma) * p0[None, :]) / gamma
    if np.any(P_phi < -PROB_TOL):
        return None
    n = M.shape[0]
    try:
        return np.linalg.solve(np.eye(n) - gamma * P_phi.T, (1.0 - gamma) * p0)
    except np.linalg.LinAlgError:
        return None


def _solve_generic(M: np.ndarray, p0: np.ndarray) -> np.ndarray | None:
    idx, sub = scc_restrict(M, p0)
    k = idx.size
    A = sub.T - np.eye(k)
    A[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    mu = np.zeros(M.shape[0])
    mu[idx] = x
    return mu


def stationary_distribution(
    M: np.ndarray,
    p0: np.ndarray,
    gamma: float | None = None,
    method: str = "solve",
) -> np.ndarray:
    """Stationary distribution of ``M`` reached from ``p0``.

    With ``gamma`` given, ``M`` is read as a restart chain
    ``(1 - gamma) 1 p0^T + gamma P_phi`` and ``mu = (1 - gamma) p0 + gamma P_phi^T mu``
    is solved directly.  Without it the balance equations are solved on the
    recurrent classes meeting ``supp(p0)``.  Power iteration is the fallback
    and is also available directly via ``method="power"``.
    """
    M = _check_chain(M)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (M.shape[0],):
        raise DimensionError("p0 length does not match chain size")
    _check_prob_rows(p0, "p0")
    if method == "power":
        return stationary_power(M, p0)
    if method != "solve":
        raise ValueError(f"unknown method {method!r}")

    mu = _solve_restart(M, p0, gamma) if gamma is not None else _solve_generic(M, p0)
    if mu is None or not np.all(np.isfinite(mu)) or np.abs(mu @ M - mu).max() > 1e-10:
        mu = stationary_power(M, p0)
    mu = np.where(mu < 0, 0.0, mu)
    return mu / mu.sum()


def occupancy(mdp: TabularMDP, policy: StochasticPolicy) -> OccupancyMeasure:
    M = induced_chain(mdp, policy)
    mu = stationary_distribution(M, mdp.p0, gamma=mdp.gamma)
    return OccupancyMeasure(rho=policy.probs * mu[:, None], mu=mu)


def value_function(mdp: TabularMDP, policy: StochasticPolicy, reward: np.ndarray) -> np.ndarray:
    """Solve ``V = R_phi + gamma P_phi V``."""
    R = np.asarray(reward, dtype=float)
    if R.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionError("reward must have shape (S, A)")
    P_phi = policy_chain(mdp, policy)
    R_phi = (policy.probs * R).sum(axis=1)
    try:
        return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_phi, R_phi)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - gamma < 1
        raise NumericalError(str(exc)) from exc


def advantage(
    mdp: TabularMDP,
    policy1: StochasticPolicy,
    policy2: StochasticPolicy,
    reward: np.ndarray,
) -> np.ndarray:
    """Average advantage of playing ``policy1`` for one step, then ``policy2``."""
    _check_pair(mdp, policy1)
    V2 = value_function(mdp, policy2, reward)
    Q2 = np.asarray(reward, dtype=float) + mdp.gamma * np.einsum("ast,t->sa", mdp.dynamics, V2)
    return (policy1.probs * Q2).sum(axis=1) - V2


def transported_occupancy(rho: np.ndarray, pi: PermutationMap) -> np.ndarray:
    """Source occupancy re-indexed by target states."""
    return np.asarray(rho)[pi.forward]


def imitation_loss(
    mdp: TabularMDP,
    policy: StochasticPolicy,
    pi_star: PermutationMap,
    policy_hat: StochasticPolicy,
) -> float:
    """L1 distance between the transported source occupancy and ``policy_hat``'s
    occupancy in the target MDP defined by ``pi_star``."""
    _check_pair(mdp, policy)
    if pi_star.size != mdp.n_states:
        raise DimensionError("permutation size does not match MDP")
    target = mdp.permuted(pi_star)
    _check_pair(target, policy_hat)
    rho_src = transported_occupancy(occupancy(mdp, policy).rho, pi_star)
    rho_hat = occupancy(target, policy_hat).rho
    return float(np.abs(rho_src - rho_hat).sum())
