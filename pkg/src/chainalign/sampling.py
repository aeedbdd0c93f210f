"""Seeded trajectories of the permuted chain and empirical chain estimates.

Random streams come from numpy's ``PCG64`` bit generator seeded through
``SeedSequence(seed, spawn_key=(stream,))``.  numpy guarantees that stream
to be stable across releases, which is what makes seed-exact replay
possible; ``Generator.random`` is the only draw used on the sampling path.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .mdp import PermutationMap, StochasticPolicy, TabularMDP, induced_chain, stationary_distribution

MU_RULES = ("transitions", "visits")


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class EmpiricalChain:
    counts: np.ndarray
    m: int
    mu_hat: np.ndarray
    M_hat: np.ndarray

    @property
    def visits(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def _cumulative(p: np.ndarray) -> list[float]:
    cum = np.cumsum(p)
    # states after the last positive entry must never be drawn
    cum[np.flatnonzero(p > 0)[-1]:] = 1.0
    return cum.tolist()


def sample_chain(M: np.ndarray, init: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Length-``m`` realisation of the chain ``M`` with ``X_1 ~ init``."""
    if m < 1:
        raise ValidationError("trajectory length must be at least 1")
    M = np.asarray(M, dtype=float)
    rows = [_cumulative(r) for r in M]
    init_cum = _cumulative(np.asarray(init, dtype=float))
    u = rng.random(m).tolist()
    out = [0] * m
    x = bisect.bisect_right(init_cum, u[0])
    out[0] = x
    for k in range(1, m):
        x = bisect.bisect_right(rows[x], u[k])
        out[k] = x
    return np.asarray(out, dtype=np.int64)


def sample_trajectory(
    mdp: TabularMDP,
    policy: StochasticPolicy,
    pi_star: PermutationMap,
    m: int,
    seed: RngSeed,
) -> np.ndarray:
    """Observed target-side trajectory of the oracle policy (restart included)."""
    if m < 1:
        raise ValidationError("trajectory length must be at least 1")
    M_target = pi_star.conjugate(induced_chain(mdp, policy))
    p0_target = mdp.p0[pi_star.forward]
    return sample_chain(M_target, p0_target, m, seed.generator())


def count_transitions(trajectory, n_states: int) -> np.ndarray:
    traj = np.asarray(trajectory, dtype=np.int64)
    N = np.zeros((n_states, n_states), dtype=np.int64)
    if traj.size >= 2:
        np.add.at(N, (traj[:-1], traj[1:]), 1)
    return N


def estimate(trajectory, n_states: int | None = None, mu_rule: str = "transitions") -> EmpiricalChain:
    """Transition counts and the empirical chain / stationary estimates.

    ``mu_rule="transitions"`` divides row counts by ``m - 1``;
    ``"visits"`` divides by the total row count, which is the same number for
    a single trajectory and is kept for sensitivity checks on merged counts.
    Rows that were never left are set to uniform.
    """
    traj = np.asarray(trajectory, dtype=np.int64)
    if traj.size < 2:
        raise ValidationError("trajectory needs at least two states")
    if mu_rule not in MU_RULES:
        raise ValidationError(f"unknown mu_rule {mu_rule!r}")
    if n_states is None:
        n_states = int(traj.max()) + 1
    if traj.min() < 0 or traj.max() >= n_states:
        raise ValidationError("trajectory state out of range")
    N = count_transitions(traj, n_states)
    return from_counts(N, m=traj.size, mu_rule=mu_rule)


def from_counts(N: np.ndarray, m: int | None = None, mu_rule: str = "transitions") -> EmpiricalChain:
    N = np.asarray(N, dtype=np.int64)
    n = N.shape[0]
    rows = N.sum(axis=1)
    total = int(rows.sum())
    if m is None:
        m = total + 1
    denom = (m - 1) if mu_rule == "transitions" else total
    mu_hat = rows / denom
    M_hat = np.full((n, n), 1.0 / n)
    seen = rows > 0
    M_hat[seen] = N[seen] / rows[seen, None]
    return EmpiricalChain(counts=N, m=int(m), mu_hat=mu_hat, M_hat=M_hat)


def save_trajectory(path, trajectory) -> None:
    """Newline-delimited integer state indices."""
    Path(path).write_text("".join(f"{int(x)}\n" for x in trajectory))


def load_trajectory(path) -> np.ndarray:
    text = Path(path).read_text().split()
    return np.array([int(tok) for tok in text], dtype=np.int64)


def estimation_errors(
    emp: EmpiricalChain,
    M: np.ndarray,
    mu: np.ndarray,
    pi_star: PermutationMap,
) -> tuple[float, float]:
    """Max row L2 error of the chain and max relative stationary error, in source coordinates."""
    inv = pi_star.inverse()
    M_tilde = inv.conjugate(emp.M_hat)
    mu_tilde = emp.mu_hat[inv.forward]
    row_err = float(np.max(np.linalg.norm(M_tilde - M, axis=1)))
    mask = mu > 0
    stat_err = float(np.max(np.abs(mu_tilde[mask] - mu[mask]) / mu[mask]))
    return row_err, stat_err


@dataclass(frozen=True)
class RateTable:
    rows: list[tuple[int, int, float, float]]
    medians: list[tuple[int, float, float]]
    slope_chain: float
    slope_stationary: float


def loglog_slope(x, y) -> float:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def rate_diagnostics(
    mdp: TabularMDP,
    policy: StochasticPolicy,
    pi_star: PermutationMap,
    m_grid,
    seeds,
    base_seed: int = 0,
) -> RateTable:
    """Estimator error against ``m`` plus fitted log-log slopes of the per-``m`` medians."""
    m_grid = [int(m) for m in m_grid]
    if any(b <= a for a, b in zip(m_grid, m_grid[1:])):
        raise ValidationError("m grid must be strictly increasing")
    M = induced_chain(mdp, policy)
    mu = stationary_distribution(M, mdp.p0, gamma=mdp.gamma)
    rows = []
    medians = []
    for m in m_grid:
        chain_errs, stat_errs = [], []
        for s in seeds:
            traj = sample_trajectory(mdp, policy, pi_star, m, RngSeed(base_seed, int(s)))
            ce, se = estimation_errors(estimate(traj, mdp.n_states), M, mu, pi_star)
            rows.append((m, int(s), ce, se))
            chain_errs.append(ce)
            stat_errs.append(se)
        medians.append((m, float(np.median(chain_errs)), float(np.median(stat_errs))))
    ms = [r[0] for r in medians]
    return RateTable(
        rows=rows,
        medians=medians,
        slope_chain=loglog_slope(ms, [r[1] for r in medians]),
        slope_stationary=loglog_slope(ms, [r[2] for r in medians]),
    )
