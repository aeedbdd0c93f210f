import numpy as np
import pytest

from chainalign.counterexample import (
    B,
    IDENTITY,
    SWAP,
    X0,
    X1,
    X2,
    X3,
    Y0,
    Y1,
    Y2,
    Y3,
    R,
    BanditMdpParams,
    FixedAgent,
    OnlineEnv,
    build_counterexample,
    elimination_agent,
    lower_bound_experiment,
    run_online,
    witness_bound,
)
from chainalign.errors import ValidationError
from chainalign.mdp import StochasticPolicy, imitation_loss
from chainalign.sampling import RngSeed


@pytest.fixture
def instance():
    params = BanditMdpParams(0.05, 0.9)
    return (params, *build_counterexample(params))


class TestConstruction:
    def test_edges(self, instance):
        params, mdp, _, _ = instance
        P = mdp.dynamics
        assert P[R, X0, X1] == 1 and P[B, X0, Y1] == 1
        assert P[B, Y0, X1] == 1 and P[R, Y0, Y1] == 1
        for a in (R, B):
            assert P[a, X1, X2] == pytest.approx(params.alpha)
            assert P[a, X1, X3] == pytest.approx(1 - params.alpha)
            assert P[a, Y1, Y2] == pytest.approx(params.beta)
            for s in (X2, X3, Y2, Y3):
                assert P[a, s, s] == 1.0
        np.testing.assert_allclose(mdp.p0, [0.5, 0.5, 0, 0, 0, 0, 0, 0])

    def test_behaviour_policy(self, instance):
        _, _, pol, _ = instance
        assert pol.probs[X0, R] == 1 and pol.probs[Y0, B] == 1

    def test_swap_candidate(self):
        names = ["x0", "y0", "x1", "y1", "x2", "x3", "y2", "y3"]
        mapped = [names[j] for j in SWAP.forward]
        assert mapped == ["y0", "x0", "y1", "x1", "y2", "y3", "x2", "x3"]

    def test_zero_epsilon_symmetric(self):
        mdp, _, cands = build_counterexample(BanditMdpParams(0.0))
        np.testing.assert_array_equal(mdp.permuted(cands[0]).dynamics, mdp.permuted(cands[1]).dynamics)

    def test_swap_exchanges_biases(self, instance):
        params, mdp, _, _ = instance
        target = mdp.permuted(SWAP)
        assert target.dynamics[R, X1, X2] == pytest.approx(params.beta)
        assert target.dynamics[R, Y1, Y2] == pytest.approx(params.alpha)

    def test_param_validation(self):
        with pytest.raises(ValidationError):
            BanditMdpParams(0.5)


class TestWitness:
    def test_random_policies(self, instance):
        params, mdp, pol, cands = instance
        rng = np.random.default_rng(0)
        for _ in range(200):
            hat = StochasticPolicy(rng.dirichlet(np.ones(2), size=8))
            for h in (0, 1):
                loss = imitation_loss(mdp, pol, cands[h], hat)
                assert loss >= witness_bound(hat, params.gamma, h) - 1e-9

    def test_witness_is_tight_for_witness_reward(self, instance):
        params, mdp, pol, cands = instance
        hat = StochasticPolicy.uniform(8, 2)
        assert witness_bound(hat, params.gamma, 0) == pytest.approx(params.gamma / 2)


class TestOnline:
    def test_uniform_agent(self, instance):
        params, mdp, pol, cands = instance
        for h in (0, 1):
            env = OnlineEnv(params, cands[h], RngSeed(0).generator())
            hat, T = run_online(env, FixedAgent(StochasticPolicy.uniform(8, 2)), 10)
            assert T == 0
            assert imitation_loss(mdp, pol, cands[h], hat) >= params.gamma / 2 - 1e-9

    def test_oracle_agent(self, instance):
        params, mdp, pol, cands = instance
        for h in (0, 1):
            env = OnlineEnv(params, cands[h], RngSeed(1).generator())
            hat, _ = run_online(env, FixedAgent(pol.transported(cands[h])), 10)
            assert imitation_loss(mdp, pol, cands[h], hat) < 1e-9

    def test_elimination_huge_budget(self, instance):
        params, mdp, pol, cands = instance
        wins = 0
        for seed in range(100):
            rng = RngSeed(2, seed).generator()
            h = int(rng.integers(2))
            agent = elimination_agent(params, 0.05)
            hat, T = run_online(OnlineEnv(params, cands[h], rng), agent, 10**7)
            wins += imitation_loss(mdp, pol, cands[h], hat) < params.gamma / 4
        assert wins >= 95

    def test_budget_truncation(self, instance):
        params, _, _, cands = instance
        agent = elimination_agent(params, 0.05)
        hat, T = run_online(OnlineEnv(params, cands[0], RngSeed(3).generator()), agent, 7)
        assert T == 7
        assert agent.selected in (0, 1)
        with pytest.raises(RuntimeError):
            agent.finalize()

    def test_resets_are_counted(self, instance):
        params, _, _, cands = instance
        env = OnlineEnv(params, cands[0], RngSeed(4).generator())
        env.reset()
        env.step(StochasticPolicy.uniform(8, 2))
        assert env.T == 2

    def test_replay(self, instance):
        params, _, _, cands = instance
        out = []
        for _ in range(2):
            agent = elimination_agent(params, 0.05)
            _, T = run_online(OnlineEnv(params, cands[1], RngSeed(5).generator()), agent, 10**6)
            out.append((T, agent.selected))
        assert out[0] == out[1]

    def test_unknown_epsilon_agent(self, instance):
        params, mdp, pol, cands = instance
        agent = elimination_agent(BanditMdpParams(0.2), 0.05, epsilon_known=False)
        env = OnlineEnv(BanditMdpParams(0.2), cands[1], RngSeed(6).generator())
        hat, T = run_online(env, agent, 10**6)
        assert agent.selected == 1 and T < 10**6

    def test_success_rate_eps_point_one(self):
        res = lower_bound_experiment([0.1], 0.05, range(200))
        assert res.summary[0]["success_rate"] >= 0.95

    def test_fewer_samples_for_larger_gap(self):
        res = lower_bound_experiment([0.05, 0.25], 0.05, range(100))
        assert res.summary[1]["median_T"] < res.summary[0]["median_T"]
        for row in res.rows:
            if row["selected_hypothesis"] == row["true_hypothesis"]:
                assert row["final_loss"] < 0.9 / 4
