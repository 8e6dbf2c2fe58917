import copy

import numpy as np
import pytest

from residual_dmp.episodic import EpisodicConfig, EpisodicPerturbationLearner
from residual_dmp.ppo import PpoConfig, PpoLearner
from residual_dmp.rl import EpisodeRecord
from residual_dmp.sac import SacConfig, SacLearner


def make_record(rng, n=12, obs_dim=4, act_dim=2, terminal=True):
    rewards = np.zeros(n)
    rewards[-1] = 1.0
    return EpisodeRecord(
        observations=rng.normal(size=(n, obs_dim)),
        actions=np.tanh(rng.normal(size=(n, act_dim))),
        rewards=rewards,
        log_probs=rng.normal(size=n),
        values=rng.normal(size=n) * 0.1,
        pre_squash=rng.normal(size=(n, act_dim)),
        final_observation=rng.normal(size=obs_dim),
        terminal=terminal,
        success=terminal,
        force_mags=np.zeros(1),
        env_dt=0.01,
        insertion_time=5.0,
    )


class TestSacMechanics:
    def test_soft_update_is_exact_polyak(self):
        learner = SacLearner(3, 2, SacConfig(hidden=(4,), soft_update=0.25), seed=0)
        online_before = [p.copy() for p in learner.q1.params]
        target_before = [p.copy() for p in learner.q1_target.params]
        # force divergence between online and target
        for p in learner.q1.params:
            p += 1.0
        online = [p.copy() for p in learner.q1.params]
        rng = np.random.default_rng(0)
        batch = (
            rng.normal(size=(8, 3)), np.tanh(rng.normal(size=(8, 2))),
            rng.normal(size=8), rng.normal(size=(8, 3)), np.zeros(8),
        )
        # run one manual soft update step only
        rho = learner.config.soft_update
        for p, tp in zip(learner.q1.params, learner.q1_target.params):
            tp *= 1.0 - rho
            tp += rho * p
        for o, t, t0 in zip(online, learner.q1_target.params, target_before):
            assert np.allclose(t, rho * o + (1 - rho) * t0, atol=1e-15)

    def test_thirty_two_updates_per_iteration_default(self):
        learner = SacLearner(3, 2, SacConfig(hidden=(4,), warmup_transitions=10,
                                             batch_size=8), seed=0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            learner.observe(rng.normal(size=3), np.tanh(rng.normal(size=2)),
                            0.0, rng.normal(size=3), False)
        diag = learner.update_iteration()
        assert diag["updated"] and diag["n_steps"] == 32
        assert SacConfig().updates_per_iteration == 32

    def test_no_update_before_warmup(self):
        learner = SacLearner(3, 2, SacConfig(hidden=(4,)), seed=0)
        assert learner.update_iteration() == {"updated": False, "n_steps": 0}

    def test_parameters_remain_finite(self):
        learner = SacLearner(3, 2, SacConfig(hidden=(8,), warmup_transitions=16,
                                             batch_size=16), seed=0)
        rng = np.random.default_rng(2)
        for _ in range(64):
            learner.observe(rng.normal(size=3), np.tanh(rng.normal(size=2)),
                            rng.normal(), rng.normal(size=3), rng.random() < 0.1)
        for _ in range(5):
            learner.update_iteration()
        assert np.all(np.isfinite(learner.get_flat()))

    def test_quadratic_bandit_mean_converges_to_zero(self):
        # entropy-regularized optimum of reward -a^2 has mean action 0
        cfg = SacConfig(hidden=(16,), warmup_transitions=32, batch_size=64,
                        learning_rate=3e-3, updates_per_iteration=32)
        learner = SacLearner(1, 1, cfg, seed=3)
        obs = np.zeros(1)
        updates = 0
        while updates < 2000:
            a, _, _ = learner.act(obs)
            learner.observe(obs, a, -float(a[0] ** 2), obs, True)
            updates += learner.update_iteration().get("n_steps", 0)
        mean = learner.mean_action(obs)
        assert abs(float(mean[0])) < 1e-2

    def test_determinism_same_seed_same_trajectory(self):
        def run():
            learner = SacLearner(3, 2, SacConfig(hidden=(4,), warmup_transitions=8,
                                                 batch_size=8), seed=7)
            rng = np.random.default_rng(9)
            for _ in range(30):
                obs = rng.normal(size=3)
                a, _, _ = learner.act(obs)
                learner.observe(obs, a, float(a.sum()), rng.normal(size=3), False)
                learner.update_iteration()
            return learner.get_flat()

        assert np.array_equal(run(), run())


class TestPpoMechanics:
    def test_update_runs_and_reports(self):
        learner = PpoLearner(4, 2, PpoConfig(hidden=(8,), epochs=2, minibatch=8), seed=0)
        rng = np.random.default_rng(4)
        records = [make_record(rng) for _ in range(3)]
        diag = learner.update(records)
        assert diag["updated"]
        assert np.isfinite(diag["policy_loss"])
        assert np.all(np.isfinite(learner.get_flat()))

    def test_empty_batch_rejected(self):
        learner = PpoLearner(4, 2, PpoConfig(hidden=(8,)), seed=0)
        with pytest.raises(ValueError):
            learner.update([])

    def test_determinism(self):
        def run():
            learner = PpoLearner(4, 2, PpoConfig(hidden=(8,), epochs=2, minibatch=8),
                                 seed=21)
            rng = np.random.default_rng(5)
            learner.update([make_record(rng) for _ in range(3)])
            return learner.get_flat()

        assert np.array_equal(run(), run())

    def test_flat_round_trip(self):
        learner = PpoLearner(4, 2, PpoConfig(hidden=(8,)), seed=1)
        flat = learner.get_flat()
        clone = PpoLearner(4, 2, PpoConfig(hidden=(8,)), seed=99)
        clone.set_flat(flat)
        assert np.array_equal(clone.get_flat(), flat)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PpoConfig(clip_ratio=1.5)
        with pytest.raises(ValueError):
            PpoConfig(discount=0.0)


class TestEpisodicLearner:
    def test_mirrored_pair_moves_toward_better_direction(self):
        learner = EpisodicPerturbationLearner(4, EpisodicConfig(sigma=1.0,
                                                                learning_rate=0.1), seed=0)
        target = np.array([1.0, -1.0, 0.5, 0.0])

        def ret(vec):
            return -float(np.sum((vec - target) ** 2))

        for _ in range(600):
            noise = learner.start_episode()
            learner.finish_episode(ret(noise.perturbation(0)), noise)
            noise = learner.start_episode()
            learner.finish_episode(ret(noise.perturbation(0)), noise)
        assert np.linalg.norm(learner.mean - target) < 0.5

    def test_evaluation_noise_is_mean_only(self):
        learner = EpisodicPerturbationLearner(3, EpisodicConfig(sigma=2.0,
                                                                learning_rate=0.1), seed=1)
        learner.mean[:] = [1.0, 2.0, 3.0]
        noise = learner.start_episode(evaluate=True)
        assert np.array_equal(noise.perturbation(0), learner.mean)
        assert np.array_equal(noise.perturbation(5), learner.mean)

    def test_per_step_noise_resamples_and_credits_average(self):
        learner = EpisodicPerturbationLearner(
            2, EpisodicConfig(sigma=1.0, learning_rate=0.1, noise_per_step=True,
                              max_decisions=16), seed=2,
        )
        noise = learner.start_episode()
        draws = [noise.perturbation(i).copy() for i in range(8)]
        assert not np.array_equal(draws[0], draws[1])
        direction = noise.credited_direction()
        expected = np.mean([d - learner.mean for d in draws], axis=0)
        assert np.allclose(direction, expected)

    def test_mirrored_second_episode(self):
        learner = EpisodicPerturbationLearner(3, EpisodicConfig(sigma=1.0,
                                                                learning_rate=0.1), seed=3)
        first = learner.start_episode()
        eps_first = first.perturbation(0) - learner.mean
        learner.finish_episode(0.3, first)
        second = learner.start_episode()
        eps_second = second.perturbation(0) - learner.mean
        assert np.allclose(eps_first, -eps_second)
