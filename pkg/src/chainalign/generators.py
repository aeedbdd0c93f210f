"""Random instance generators used by the experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counterexample import BanditMdpParams, build_counterexample
from .errors import GenerationError, ValidationError
from .mdp import StochasticPolicy, TabularMDP, induced_chain, stationary_distribution
from .sampling import RngSeed
from .spectral import FriendlinessCertificate, friendliness, rescale

KINDS = ("random-friendly-chain", "random-mdp", "counterexample")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "random-friendly-chain"
    n_states: int = 6
    n_actions: int = 2
    gamma: float = 0.9
    retry_cap: int = 50
    tol_alpha: float = 1e-3
    tol_beta: float = 1e-3
    epsilon: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown generator kind {self.kind!r}")
        if self.n_states < 1 or self.n_actions < 1:
            raise ValidationError("n_states and n_actions must be positive")
        if self.retry_cap < 1:
            raise ValidationError("retry_cap must be positive")


@dataclass(frozen=True)
class Instance:
    mdp: TabularMDP
    policy: StochasticPolicy
    certificate: FriendlinessCertificate | None
    attempts: int


def random_mdp(n_states: int, n_actions: int, gamma: float, rng: np.random.Generator):
    """Dirichlet(1) dynamics, policy and initial distribution."""
    P = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
    probs = rng.dirichlet(np.ones(n_actions), size=n_states)
    p0 = rng.dirichlet(np.ones(n_states))
    return TabularMDP(P, p0, gamma), StochasticPolicy(probs)


def chain_certificate(mdp: TabularMDP, policy: StochasticPolicy, tol_alpha: float, tol_beta: float):
    M = induced_chain(mdp, policy)
    mu = stationary_distribution(M, mdp.p0, gamma=mdp.gamma)
    return friendliness(rescale(M, mu), tol_alpha, tol_beta)


def generate_random_friendly(spec: GeneratorSpec, seed: int | RngSeed) -> Instance:
    """Draw random MDPs until the induced chain's certificate passes.

    The initial distribution has full support, so the restart makes every
    induced chain ergodic.
    """
    if not isinstance(seed, RngSeed):
        seed = RngSeed(int(seed))
    rng = seed.generator()
    best = (-np.inf, -np.inf)
    for attempt in range(1, spec.retry_cap + 1):
        mdp, policy = random_mdp(spec.n_states, spec.n_actions, spec.gamma, rng)
        cert = chain_certificate(mdp, policy, spec.tol_alpha, spec.tol_beta)
        if cert.is_friendly:
            return Instance(mdp, policy, cert, attempt)
        if min(cert.alpha, cert.beta) > min(best):
            best = (cert.alpha, cert.beta)
    raise GenerationError(
        f"no friendly instance in {spec.retry_cap} attempts "
        f"(best alpha={best[0]:.3g}, beta={best[1]:.3g})",
        best_alpha=float(best[0]),
        best_beta=float(best[1]),
    )


def generate(spec: GeneratorSpec, seed: int | RngSeed) -> Instance:
    if spec.kind == "random-friendly-chain":
        return generate_random_friendly(spec, seed)
    if spec.kind == "random-mdp":
        if not isinstance(seed, RngSeed):
            seed = RngSeed(int(seed))
        mdp, policy = random_mdp(spec.n_states, spec.n_actions, spec.gamma, seed.generator())
        return Instance(mdp, policy, None, 1)
    mdp, policy, _ = build_counterexample(BanditMdpParams(spec.epsilon, spec.gamma))
    return Instance(mdp, policy, None, 1)
