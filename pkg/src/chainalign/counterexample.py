"""Nearly symmetric bandit-like MDP and the online alignment protocol.

State order is ``x0, y0, x1, y1, x2, x3, y2, y3`` and action order ``r, b``.
From ``x0``, ``r`` leads to ``x1`` and ``b`` to ``y1``; from ``y0`` the two
actions lead the opposite way.  ``x1`` falls into ``x2`` with probability
``alpha = 1/2 + eps`` (else ``x3``), ``y1`` into ``y2`` with probability
``beta = 1/2 - eps`` (else ``y3``), whatever the action.  The four terminal
states are absorbing.  The behaviour policy always heads to ``x1``.

Two target hypotheses are considered: the identity and the swap of every
``x`` state with its ``y`` counterpart.  Telling them apart online amounts
to comparing two coins whose biases differ by ``2 eps``.
"""

from __future__ import annotations

import bisect
import functools
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import ValidationError
from .mdp import PermutationMap, StochasticPolicy, TabularMDP, imitation_loss
from .sampling import RngSeed, _cumulative, loglog_slope

X0, Y0, X1, Y1, X2, X3, Y2, Y3 = range(8)
STATE_NAMES = ("x0", "y0", "x1", "y1", "x2", "x3", "y2", "y3")
R, B = 0, 1
N_STATES, N_ACTIONS = 8, 2

IDENTITY = PermutationMap(np.arange(8))
SWAP = PermutationMap(np.array([Y0, X0, Y1, X1, Y2, Y3, X2, X3]))
HYPOTHESES = (IDENTITY, SWAP)


@dataclass(frozen=True)
class BanditMdpParams:
    epsilon: float
    gamma: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ValidationError("epsilon must lie in [0, 1/2)")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must lie in (0, 1)")

    @property
    def alpha(self) -> float:
        return 0.5 + self.epsilon

    @property
    def beta(self) -> float:
        return 0.5 - self.epsilon


def build_counterexample(params: BanditMdpParams):
    """Source MDP, behaviour policy and the two candidate permutations."""
    P = np.zeros((N_ACTIONS, N_STATES, N_STATES))
    P[R, X0, X1] = P[B, X0, Y1] = 1.0
    P[B, Y0, X1] = P[R, Y0, Y1] = 1.0
    for a in (R, B):
        P[a, X1, X2], P[a, X1, X3] = params.alpha, 1.0 - params.alpha
        P[a, Y1, Y2], P[a, Y1, Y3] = params.beta, 1.0 - params.beta
        for s in (X2, X3, Y2, Y3):
            P[a, s, s] = 1.0
    p0 = np.zeros(N_STATES)
    p0[X0] = p0[Y0] = 0.5
    mdp = TabularMDP(P, p0, params.gamma)

    probs = np.full((N_STATES, N_ACTIONS), 0.5)
    probs[X0] = (1.0, 0.0)
    probs[Y0] = (0.0, 1.0)
    return mdp, StochasticPolicy(probs), [IDENTITY, SWAP]


def witness_bound(policy_hat: StochasticPolicy, gamma: float, hypothesis: int) -> float:
    """Lower bound on the loss of ``policy_hat`` from the reward that pays 1 on the
    side of the chain the oracle moves to."""
    p = policy_hat.probs
    if hypothesis == 0:
        heads_right = p[X0, R] + p[Y0, B]
    else:
        heads_right = p[X0, B] + p[Y0, R]
    return gamma - gamma * heads_right / 2.0


@dataclass(frozen=True)
class Transition:
    state: int | None
    action: int | None
    next_state: int
    reset: bool


class OnlineEnv:
    """Target MDP for a hidden permutation; ``T`` counts transitions and resets."""

    def __init__(self, params: BanditMdpParams, hidden: PermutationMap, rng: np.random.Generator):
        source, _, _ = build_counterexample(params)
        self.params = params
        self.hidden = hidden
        self.mdp = source.permuted(hidden)
        self._rng = rng
        self._p0_cum = _cumulative(self.mdp.p0)
        self._dyn_cum = [[_cumulative(row) for row in block] for block in self.mdp.dynamics]
        self.T = 0
        self.state = self._draw(self._p0_cum)

    def _draw(self, cum: list[float]) -> int:
        return bisect.bisect_right(cum, self._rng.random())

    def step(self, policy: StochasticPolicy) -> Transition:
        s = self.state
        a = self._draw(_cumulative(policy.probs[s]))
        nxt = self._draw(self._dyn_cum[a][s])
        self.state = nxt
        self.T += 1
        return Transition(s, a, nxt, False)

    def reset(self) -> Transition:
        s = self.state
        self.state = self._draw(self._p0_cum)
        self.T += 1
        return Transition(s, None, self.state, True)


class OnlineAgent(Protocol):
    done: bool

    def choose_policy(self, history: list[Transition]) -> StochasticPolicy | None:
        """Policy for the next transition, or ``None`` to request a reset."""

    def observe(self, transition: Transition) -> None: ...

    def finalize(self) -> StochasticPolicy: ...


def run_online(env: OnlineEnv, agent: OnlineAgent, budget: int) -> tuple[StochasticPolicy, int]:
    """Drive ``agent`` against ``env`` until it stops or ``budget`` transitions are spent."""
    if budget < 1:
        raise ValidationError("budget must be at least 1")
    history: list[Transition] = []
    start = Transition(None, None, env.state, True)
    agent.observe(start)
    while not agent.done and env.T < budget:
        choice = agent.choose_policy(history)
        tr = env.reset() if choice is None else env.step(choice)
        history.append(tr)
        agent.observe(tr)
    return agent.finalize(), env.T


class _FinalizeOnce:
    _finalized = False

    def _mark_final(self):
        if self._finalized:
            raise RuntimeError("finalize called twice")
        self._finalized = True


class FixedAgent(_FinalizeOnce):
    """Plays nothing and returns a fixed policy."""

    done = True

    def __init__(self, policy: StochasticPolicy):
        self.policy = policy

    def choose_policy(self, history):  # pragma: no cover - never asked
        return None

    def observe(self, transition):
        pass

    def finalize(self) -> StochasticPolicy:
        self._mark_final()
        return self.policy


@functools.lru_cache(maxsize=None)
def _point_policy(state: int, action: int | None) -> StochasticPolicy:
    probs = np.full((N_STATES, N_ACTIONS), 0.5)
    if action is not None:
        probs[state] = 0.0
        probs[state, action] = 1.0
    return StochasticPolicy(probs)


class EliminationAgent(_FinalizeOnce):
    """Samples the two forks alternately and runs a sequential test between the hypotheses.

    Every sample costs three transitions: start state to fork, fork to
    terminal, reset.  With ``epsilon_known`` the test is Wald's SPRT on the
    log-likelihood ratio with both error rates set to ``delta / 2``; otherwise it stops once anytime Hoeffding intervals
    around the two empirical biases separate.
    """

    _ROUTE = {(X0, X1): R, (X0, Y1): B, (Y0, X1): B, (Y0, Y1): R}

    def __init__(self, params: BanditMdpParams, delta: float, epsilon_known: bool = True):
        if not 0.0 < delta < 1.0:
            raise ValidationError("delta must lie in (0, 1)")
        self.params = params
        self.delta = delta
        self.epsilon_known = epsilon_known
        self.state: int | None = None
        self.successes = {X1: 0, Y1: 0}
        self.pulls = {X1: 0, Y1: 0}
        self.selected: int | None = None
        self.done = False

    def _next_fork(self) -> int:
        return X1 if self.pulls[X1] <= self.pulls[Y1] else Y1

    def choose_policy(self, history):
        s = self.state
        if s in (X0, Y0):
            return _point_policy(s, self._ROUTE[(s, self._next_fork())])
        if s in (X1, Y1):
            return _point_policy(s, None)
        return None

    def observe(self, transition: Transition) -> None:
        s, nxt = transition.state, transition.next_state
        if not transition.reset and s in (X1, Y1):
            self.pulls[s] += 1
            self.successes[s] += int(nxt == (X2 if s == X1 else Y2))
            self._test()
        self.state = nxt

    def _test(self) -> None:
        nx, ny = self.pulls[X1], self.pulls[Y1]
        sx, sy = self.successes[X1], self.successes[Y1]
        if self.epsilon_known:
            if self.params.epsilon == 0.0:
                return
            step = math.log(self.params.alpha / self.params.beta)
            llr = step * ((2 * sx - nx) - (2 * sy - ny))
            # each error direction gets half of delta
            half = self.delta / 2.0
            threshold = math.log((1.0 - half) / half)
            if abs(llr) >= threshold:
                self._decide(0 if llr > 0 else 1)
        elif nx > 0 and ny > 0:
            rx, ry = self._radius(nx), self._radius(ny)
            diff = sx / nx - sy / ny
            if abs(diff) > rx + ry:
                self._decide(0 if diff > 0 else 1)

    def _radius(self, n: int) -> float:
        return math.sqrt(math.log(4.0 * n * n / self.delta) / (2.0 * n))

    def _decide(self, hypothesis: int) -> None:
        self.selected = hypothesis
        self.done = True

    def finalize(self) -> StochasticPolicy:
        self._mark_final()
        _, behaviour, candidates = build_counterexample(self.params)
        choice = self.selected
        if choice is None:
            nx, ny = max(self.pulls[X1], 1), max(self.pulls[Y1], 1)
            choice = 0 if self.successes[X1] / nx >= self.successes[Y1] / ny else 1
            self.selected = choice
        return behaviour.transported(candidates[choice])


def elimination_agent(params: BanditMdpParams, delta: float, epsilon_known: bool = True) -> EliminationAgent:
    return EliminationAgent(params, delta, epsilon_known)


@dataclass
class LowerBoundResult:
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    slope: float = float("nan")


def lower_bound_experiment(
    eps_grid,
    delta: float,
    seeds,
    gamma: float = 0.9,
    base_seed: int = 0,
    budget: int = 10_000_000,
    epsilon_known: bool = True,
) -> LowerBoundResult:
    """Transitions used by the elimination agent for each ``eps``, and the log-log slope
    of the median against ``eps``."""
    out = LowerBoundResult()
    medians = []
    for k, eps in enumerate(eps_grid):
        params = BanditMdpParams(float(eps), gamma)
        mdp, behaviour, candidates = build_counterexample(params)
        Ts = []
        wins = 0
        for s in seeds:
            rng = RngSeed(base_seed, k * 1_000_003 + int(s)).generator()
            truth = int(rng.integers(2))
            env = OnlineEnv(params, candidates[truth], rng)
            agent = elimination_agent(params, delta, epsilon_known)
            policy_hat, T = run_online(env, agent, budget)
            loss = imitation_loss(mdp, behaviour, candidates[truth], policy_hat)
            wins += loss < gamma / 4
            Ts.append(T)
            out.rows.append(
                {
                    "epsilon": float(eps),
                    "seed": int(s),
                    "T": int(T),
                    "final_loss": loss,
                    "selected_hypothesis": int(agent.selected),
                    "true_hypothesis": truth,
                }
            )
        med = float(np.median(Ts))
        medians.append(med)
        out.summary.append(
            {"epsilon": float(eps), "median_T": med, "success_rate": wins / len(Ts)}
        )
    if len(medians) >= 2:
        out.slope = loglog_slope([float(e) for e in eps_grid], medians)
    return out
