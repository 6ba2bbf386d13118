from fractions import Fraction

import numpy as np
import pytest

from dialog_selfplay.errors import EmptyBatch, ShapeMismatch
from dialog_selfplay.game_core import build_game
from dialog_selfplay.selfplay_rl import (
    FULL,
    NONE,
    OPPOSITE,
    UNDEFINED,
    EpisodeBatch,
    EpisodeRecord,
    PolicyTable,
    TrainConfig,
    classify_restart,
    collect_batch,
    convergence_time,
    make_environment,
    pg_gradient,
    pg_objective,
    pg_update,
    policy_convention,
    ppo_gradient,
    ppo_objective,
    ppo_update,
    run_episode,
    run_experiment,
    run_restart,
    softmax,
)
from oracles import random_tree_spec

HI = 20.0


@pytest.fixture(scope="module")
def env(tree):
    return make_environment(tree)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def deterministic(user_faithful: bool, agent_obeys: bool) -> PolicyTable:
    # rows are (Node 1 / IS1 = Starbucks side, Node 2 / IS2 = Peet's side), action 0 = Starbucks
    def table(keep):
        return np.array([[HI, -HI], [-HI, HI]]) if keep else np.array([[-HI, HI], [HI, -HI]])
    return PolicyTable(table(user_faithful), table(agent_obeys))


def record(user_obs, user_act, agent_obs, agent_act, reward):
    return EpisodeRecord("x", "u", "a", Fraction(reward), user_obs, user_act, agent_obs, agent_act)


def ref_oracle_convergence(rewards, window=300, threshold=Fraction(1095, 1000)):
    for i in range(window, len(rewards) + 1):
        if sum(rewards[i - window:i]) / window > threshold:
            return i
    return None


class TestEpisode:
    @pytest.mark.parametrize("faithful,obey,reward", [
        (True, True, Fraction(11, 10)),
        (False, False, Fraction(1)),
        (True, False, Fraction(-1)),
    ])
    def test_deterministic_policies(self, tree, faithful, obey, reward):
        policies = deterministic(faithful, obey)
        r = rng(1)
        assert {run_episode(tree, policies, r).reward for _ in range(200)} == {reward}

    def test_episode_fields(self, env):
        rec = run_episode(env, deterministic(False, False), rng(4))
        assert rec.destination in ("Starbucks", "Peet's")
        assert rec.user_action != "Say-" + rec.destination
        assert rec.agent_action == "Drive-" + rec.destination

    def test_single_episodes_match_batch(self, env):
        policies = PolicyTable.zeros(env)
        singles = [run_episode(env, policies, g) for g in [rng(9)] for _ in range(50)]
        batch, _ = collect_batch(env, policies, 50, rng(9))
        assert [s.user_act for s in singles] == batch.user_act.tolist()
        assert [s.agent_act for s in singles] == batch.agent_act.tolist()
        assert [s.reward for s in singles] == [env.reward_values[c] for c in batch.reward_code]

    def test_rewards_are_game_payoffs(self, env):
        batch, _ = collect_batch(env, PolicyTable.zeros(env), 2000, rng(2))
        assert set(env.reward_values[c] for c in batch.reward_code) == {Fraction(11, 10), Fraction(1), Fraction(-1)}

    def test_shape_mismatch(self):
        for seed in range(200):
            t = build_game(random_tree_spec(seed))
            try:
                make_environment(t)
            except ShapeMismatch:
                return
        pytest.fail("no incompatible random tree found")


class TestPolicyGradient:
    def test_single_episode_example(self):
        p = PolicyTable(np.zeros((1, 2)), np.zeros((1, 2)))
        out = pg_update(p, [record(0, 0, 0, 0, 1)], TrainConfig(learning_rate=1.0, baseline="none"))
        assert np.allclose(out.user, [[0.5, -0.5]], atol=1e-15)
        assert np.allclose(out.agent, [[0.5, -0.5]], atol=1e-15)

    def test_zero_advantage(self):
        p = PolicyTable(np.array([[0.3, -0.2], [1.0, 0.0]]), np.array([[0.0, 0.7], [-0.4, 0.1]]))
        batch = [record(0, 1, 1, 0, 1), record(1, 0, 0, 1, 1), record(0, 0, 0, 0, 1)]
        out = pg_update(p, batch, TrainConfig(learning_rate=0.5))
        assert out == p

    def test_symmetric_episodes(self):
        p = PolicyTable(np.zeros((1, 2)), np.zeros((1, 2)))
        out = pg_update(p, [record(0, 0, 0, 0, 1), record(0, 1, 0, 1, 1)], TrainConfig(learning_rate=1.0, baseline="none"))
        assert out.user[0, 0] == out.user[0, 1]
        assert out.agent[0, 0] == out.agent[0, 1]

    def test_empty_batch(self):
        p = PolicyTable(np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(EmptyBatch):
            pg_update(p, [], TrainConfig())
        with pytest.raises(EmptyBatch):
            ppo_update(p, [], TrainConfig(algorithm="ppo"))


class TestPPO:
    def _batch(self, env, seed=0):
        batch, _ = collect_batch(env, PolicyTable.zeros(env), 300, rng(seed))
        return batch

    def test_one_epoch_matches_pg(self, env):
        batch = self._batch(env)
        p = PolicyTable(np.array([[0.2, -0.1], [0.0, 0.4]]), np.array([[0.3, 0.3], [-0.5, 0.2]]))
        cfg = TrainConfig(algorithm="ppo", ppo_epochs=1, learning_rate=0.01)
        a = ppo_update(p, batch, cfg)
        b = pg_update(p, batch, TrainConfig(learning_rate=0.01))
        assert np.allclose(a.user, b.user, rtol=0, atol=1e-14)
        assert np.allclose(a.agent, b.agent, rtol=0, atol=1e-14)

    def test_unbounded_clip_equals_reinforce(self, env):
        batch = self._batch(env, 3)
        p = PolicyTable(np.array([[1.0, -1.0], [0.5, 0.0]]), np.array([[0.0, 2.0], [0.3, -0.3]]))
        assert np.allclose(ppo_gradient(p, p, batch, 1e9), pg_gradient(p, batch), atol=1e-12)

    def test_zero_advantage(self):
        p = PolicyTable(np.zeros((2, 2)), np.zeros((2, 2)))
        batch = [record(0, 1, 1, 0, 1), record(1, 0, 0, 1, 1)]
        assert ppo_update(p, batch, TrainConfig(algorithm="ppo")) == p

    def test_clip_saturation(self):
        # old policy uniform; new row 0 logits (a, 0) give ratio 2 sigmoid(a) just above 1 + eps
        eps = 0.2
        a = np.log(1.2 / 0.8) + 1e-6
        old = PolicyTable(np.zeros((2, 2)), np.zeros((1, 2)))
        new = PolicyTable(np.array([[a, 0.0], [0.0, 0.0]]), np.zeros((1, 2)))
        # sample 0: row 0, action 0, positive advantage; sample 1: row 1 at ratio 1, negative advantage
        batch = EpisodeBatch.from_records([record(0, 0, 0, 0, 1), record(1, 0, 0, 0, 0)])
        assert softmax(new.user)[0, 0] / 0.5 > 1 + eps
        gu, _ = ppo_gradient(new, old, batch, eps)
        assert np.all(gu[0] == 0)
        assert np.any(gu[1] != 0)
        h = 1e-7
        for j in range(2):
            d = np.zeros((2, 2))
            d[0, j] = h
            fd = (ppo_objective(PolicyTable(new.user + d, new.agent), old, batch, eps)
                  - ppo_objective(PolicyTable(new.user - d, new.agent), old, batch, eps)) / (2 * h)
            assert abs(fd) < 1e-9


def _random_state(r: np.random.Generator, n=40):
    user = r.normal(0, 1.5, (2, 2))
    agent = r.normal(0, 1.5, (2, 2))
    b = EpisodeBatch(
        r.integers(0, 2, n), r.integers(0, 2, n), r.integers(0, 2, n), r.integers(0, 2, n),
        r.choice([1.1, 1.0, -1.0], n), np.zeros(n, dtype=np.int8))
    return PolicyTable(user, agent), b


def _fd(objective, policies, h=1e-6):
    grads = []
    for which in ("user", "agent"):
        base = getattr(policies, which)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            d = np.zeros_like(base)
            d[idx] = h
            shift = lambda s: PolicyTable(policies.user + s * d, policies.agent) if which == "user" \
                else PolicyTable(policies.user, policies.agent + s * d)
            g[idx] = (objective(shift(1)) - objective(shift(-1))) / (2 * h)
        grads.append(g)
    return grads


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)


def finite_difference_errors(states=100, seed=123):
    """Worst relative error of both analytic gradients over random states."""
    r = rng(seed)
    worst_pg = worst_ppo = 0.0
    done = 0
    while done < states:
        p, batch = _random_state(r)
        old = PolicyTable(p.user + r.normal(0, 0.3, (2, 2)), p.agent + r.normal(0, 0.3, (2, 2)))
        eps = 0.2
        ratios = np.concatenate([
            softmax(p.user)[batch.user_obs, batch.user_act] / softmax(old.user)[batch.user_obs, batch.user_act],
            softmax(p.agent)[batch.agent_obs, batch.agent_act] / softmax(old.agent)[batch.agent_obs, batch.agent_act]])
        if np.min(np.abs(np.abs(ratios - 1) - eps)) < 1e-3:
            continue  # too close to a clip kink for a central difference
        for baseline in ("none", "batch-mean"):
            fd = _fd(lambda q: pg_objective(q, batch, baseline), p)
            an = pg_gradient(p, batch, baseline)
            worst_pg = max(worst_pg, _rel_err(np.concatenate([fd[0], fd[1]]), np.concatenate([an[0], an[1]])))
        fd = _fd(lambda q: ppo_objective(q, old, batch, eps), p)
        an = ppo_gradient(p, old, batch, eps)
        worst_ppo = max(worst_ppo, _rel_err(np.concatenate([fd[0], fd[1]]), np.concatenate([an[0], an[1]])))
        done += 1
    return worst_pg, worst_ppo


def test_gradients_match_finite_differences():
    pg, ppo = finite_difference_errors(100)
    assert pg < 1e-4
    assert ppo < 1e-4


class TestClassification:
    def test_all_full(self):
        assert classify_restart([Fraction(11, 10)] * 27_000) == FULL

    def test_opposite_threshold(self):
        assert classify_restart([Fraction(1)] * 2700 + [Fraction(-1)] * 300) == OPPOSITE

    def test_just_below_threshold(self):
        assert classify_restart([Fraction(1)] * 2699 + [Fraction(-1)] * 301) == NONE

    def test_short(self):
        assert classify_restart([Fraction(11, 10)] * 2999) == UNDEFINED

    def test_only_tail_counts(self):
        assert classify_restart([Fraction(-1)] * 5000 + [Fraction(11, 10)] * 3000) == FULL


class TestConvergence:
    def test_all_full(self):
        assert convergence_time([Fraction(11, 10)] * 1000) == 300

    def test_all_one(self):
        assert convergence_time([Fraction(1)] * 1000) is None

    def test_ones_then_full(self):
        rewards = [Fraction(1)] * 300 + [Fraction(11, 10)] * 700
        oracle = ref_oracle_convergence(rewards)
        assert oracle == 586
        assert convergence_time(rewards) == oracle

    def test_threshold_is_strict(self):
        # 285 full rewards and 15 ones average exactly 1.095
        rewards = [Fraction(1)] * 15 + [Fraction(11, 10)] * 285
        assert sum(rewards) / 300 == Fraction(1095, 1000)
        assert convergence_time(rewards) is None

    def test_random_streams_against_oracle(self):
        r = rng(7)
        vals = [Fraction(11, 10), Fraction(1), Fraction(-1)]
        for _ in range(5):
            p = r.dirichlet([20, 1, 0.3])
            rewards = [vals[i] for i in r.choice(3, 1500, p=p)]
            assert convergence_time(rewards) == ref_oracle_convergence(rewards)


class TestRestart:
    def test_zero_iterations(self, env):
        res = run_restart(env, TrainConfig(iterations=0))
        assert res.episodes == 0
        assert res.outcome == UNDEFINED

    def test_default_seed_zero(self, env):
        res = run_restart(env, TrainConfig(seed=0))
        assert res.episodes == 27_000
        assert res.outcome == FULL
        assert res.outcome == classify_restart(res.rewards)
        assert res.convergence_episode == convergence_time(res.rewards)
        assert policy_convention(env, res.policies) == "TRUTHFUL"

    def test_deterministic(self, env):
        cfg = TrainConfig(algorithm="ppo", iterations=20, seed=17)
        a, b = run_restart(env, cfg), run_restart(env, cfg)
        assert a.same_run(b)
        assert a.digest() == b.digest()

    def test_probabilities_valid(self, env):
        res = run_restart(env, TrainConfig(iterations=30, seed=5, learning_rate=0.05))
        for probs in (res.policies.user_probs(), res.policies.agent_probs()):
            assert np.all((probs > 0) & (probs < 1))
            assert np.allclose(probs.sum(axis=1), 1, atol=1e-12)


class TestExperiment:
    def test_single_restart(self, env):
        rep = run_experiment(env, TrainConfig(iterations=12), restarts=1)
        assert sum(rep.counts("pg").values()) == 1

    def test_seeds_and_parallel(self, env):
        cfg = TrainConfig(algorithm="ppo", iterations=15, seed=40)
        serial = run_experiment(env, cfg, restarts=4)
        parallel = run_experiment(env, cfg, restarts=4, parallelism=2)
        s, p = serial.section("ppo").results, parallel.section("ppo").results
        assert [r.seed for r in s] == [40, 41, 42, 43]
        assert all(a.same_run(b) for a, b in zip(s, p))

    def test_opposite_restarts_speak_a_secret_language(self, env):
        results = run_experiment(env, TrainConfig(), restarts=100).section("pg").results
        assert any(r.outcome == OPPOSITE for r in results)
        for r in results:
            convention = policy_convention(env, r.policies)
            if r.outcome == OPPOSITE:
                assert convention == "OPPOSITE"
            if r.outcome == FULL:
                assert convention == "TRUTHFUL"

    def test_rejects_zero_restarts(self, env):
        with pytest.raises(ValueError):
            run_experiment(env, TrainConfig(), restarts=0)


def test_softmax_stable():
    p = softmax(np.array([[1000.0, 0.0], [-1000.0, -1000.0]]))
    assert np.all(np.isfinite(p))
    assert np.allclose(p.sum(axis=1), 1)
