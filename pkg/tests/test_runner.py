import numpy as np
import pytest

from residual_dmp.env import ToyInsertionEnv
from residual_dmp.nets import GaussianTanhPolicy
from residual_dmp.policies import ActionBounds, ExplorationLocus
from residual_dmp.runner import (
    LinearAgent,
    NeuralAgent,
    RandomAgent,
    ZeroAgent,
    action_scales,
    build_task,
    evaluate,
    policy_act,
    run_episode,
    unit_to_residual,
)
from residual_dmp.sac import SacConfig, SacLearner


@pytest.fixture(scope="module")
def easy_setup():
    return build_task("easy")


class TestActionMapping:
    def test_bounds_respected_for_random_units(self):
        rng = np.random.default_rng(0)
        bounds = ActionBounds()
        for _ in range(100_000):
            unit = rng.uniform(-1.0, 1.0, size=6)
            act = unit_to_residual(unit, bounds, full_pose=True)
            assert act.within(bounds)

    def test_translation_only_has_no_rotation(self):
        act = unit_to_residual(np.array([1.0, -1.0, 0.5]), ActionBounds(), False)
        assert act.alpha == 0.0

    def test_degenerate_rotation_vector_is_identity(self):
        act = unit_to_residual(np.zeros(6), ActionBounds(), True)
        assert act.alpha == 0.0

    def test_scales_shape(self):
        assert action_scales(ActionBounds(), True).shape == (6,)
        assert action_scales(ActionBounds(), False).shape == (3,)


class TestPolicyActSurface:
    def test_returns_bounded_action_and_logp(self, easy_setup):
        rng = np.random.default_rng(1)
        policy = GaussianTanhPolicy(20, 6, (16,), rng)
        env = ToyInsertionEnv(easy_setup.config)
        obs = env.reset(rng)
        bounds = easy_setup.bounds
        for _ in range(200):
            act, logp = policy_act(policy, obs, bounds, rng, full_pose=True)
            assert act.within(bounds)
            assert np.isfinite(logp)

    def test_logp_includes_scale_correction(self, easy_setup):
        # scaling a density by the bound shifts log-prob by -sum(log scale)
        rng = np.random.default_rng(2)
        policy = GaussianTanhPolicy(20, 3, (8,), rng)
        env = ToyInsertionEnv(easy_setup.config)
        obs = env.reset(rng)
        from residual_dmp.runner import normalized_obs_vector

        scales = action_scales(easy_setup.bounds, False)
        draws = []
        for seed in range(50):
            r1 = np.random.default_rng(seed)
            _, u, logp_unit = policy.act_single(normalized_obs_vector(obs), r1)
            r2 = np.random.default_rng(seed)
            _, logp_phys = policy_act(policy, obs, easy_setup.bounds, r2, False)
            draws.append(logp_unit - logp_phys)
        assert np.allclose(draws, np.sum(np.log(scales)), atol=1e-12)


class TestEpisodeMechanics:
    def test_gate_zero_residual_matches_bare_dmp(self, easy_setup):
        # with the gate never activating, a residual agent must leave the
        # execution bit-identical to the agentless base policy
        import dataclasses

        gated = dataclasses.replace(easy_setup, gate_fraction=1.0)
        env = ToyInsertionEnv(gated.config)
        rec_base = run_episode(env, gated, None, np.random.default_rng(5))
        env2 = ToyInsertionEnv(gated.config)
        rec_agent = run_episode(env2, gated, RandomAgent(gated.bounds),
                                np.random.default_rng(5))
        assert rec_base.final_l2 == rec_agent.final_l2
        assert np.array_equal(rec_base.force_mags, rec_agent.force_mags)

    def test_determinism(self, easy_setup):
        def run(seed):
            env = ToyInsertionEnv(easy_setup.config)
            rec = run_episode(env, easy_setup, RandomAgent(easy_setup.bounds),
                              np.random.default_rng(seed))
            return rec

        a, b = run(9), run(9)
        assert a.final_l2 == b.final_l2
        assert np.array_equal(a.force_mags, b.force_mags)
        assert np.array_equal(a.actions, b.actions)

    def test_decisions_only_after_gate(self, easy_setup):
        env = ToyInsertionEnv(easy_setup.config)
        rec = run_episode(env, easy_setup, ZeroAgent(), np.random.default_rng(6))
        cfg = easy_setup.config
        active_window = cfg.episode_length * (1 - easy_setup.gate_fraction)
        max_decisions = int(np.ceil(
            active_window / (cfg.dt * easy_setup.decision_interval)
        )) + 1
        assert 0 < rec.rewards.shape[0] <= max_decisions

    def test_pure_mode_controls_whole_episode(self, easy_setup):
        env = ToyInsertionEnv(easy_setup.config)
        learner = SacLearner(20, 3, SacConfig(hidden=(8,)), seed=0)
        agent = NeuralAgent(learner, ActionBounds(0.05, 0.2), False)
        rec = run_episode(env, easy_setup, agent, np.random.default_rng(7), mode="pure")
        expected = easy_setup.config.max_steps // easy_setup.decision_interval
        assert rec.rewards.shape[0] == expected

    def test_linear_agent_adapts_within_episode(self, easy_setup):
        env = ToyInsertionEnv(easy_setup.config)
        agent = LinearAgent(easy_setup.bounds)
        rec = run_episode(env, easy_setup, agent, np.random.default_rng(8))
        acts = rec.actions
        assert np.any(np.abs(acts[1:]) > 0.0)
        # all bounded
        assert np.all(np.abs(acts) <= 1.0 + 1e-9)

    def test_parameter_locus_uses_episode_noise(self, easy_setup):
        from residual_dmp.episodic import EpisodeNoise

        dim = easy_setup.dmp.weights.size
        noise = EpisodeNoise(np.zeros(dim), np.full((1, dim), 3.0), per_step=False)
        env = ToyInsertionEnv(easy_setup.config)
        rec_noisy = run_episode(
            env, easy_setup, None, np.random.default_rng(10),
            locus=ExplorationLocus.PARAMETER_SPACE, episode_noise=noise,
        )
        env2 = ToyInsertionEnv(easy_setup.config)
        rec_plain = run_episode(env2, easy_setup, None, np.random.default_rng(10))
        assert rec_noisy.final_l2 != rec_plain.final_l2


class TestEvaluate:
    def test_deterministic_and_reports_shapes(self, easy_setup):
        s1 = evaluate(easy_setup, ZeroAgent(), 20, seed=3)
        s2 = evaluate(easy_setup, ZeroAgent(), 20, seed=3)
        assert np.array_equal(s1.successes, s2.successes)
        assert s1.n == 20
        assert s1.start_offsets.shape == (20, 3)
        assert 0.0 <= s1.success_rate <= 1.0

    def test_unsuccessful_episodes_report_full_length(self, easy_setup):
        stats = evaluate(easy_setup, ZeroAgent(), 20, seed=4)
        full = easy_setup.config.episode_length
        for success, t in zip(stats.successes, stats.insertion_times):
            if not success:
                assert t == full
            else:
                assert t < full
