import numpy as np
import pytest

from chainalign.generators import GeneratorSpec, generate_random_friendly
from chainalign.mdp import StochasticPolicy, TabularMDP

ACCEPTANCE_LINES: list[str] = []


def random_instance(rng, n=4, n_actions=2, gamma=None, conc=1.0):
    gamma = rng.uniform(0.5, 0.95) if gamma is None else gamma
    P = rng.dirichlet(np.full(n, conc), size=(n_actions, n))
    p0 = rng.dirichlet(np.ones(n))
    pol = rng.dirichlet(np.ones(n_actions), size=n)
    return TabularMDP(P, p0, gamma), StochasticPolicy(pol)


@pytest.fixture
def two_state_chain():
    return np.array([[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture
def friendly6():
    return generate_random_friendly(GeneratorSpec(n_states=6), 0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
