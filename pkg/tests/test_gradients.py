"""Analytic gradients of every learner objective against central differences."""

import numpy as np
import pytest

from residual_dmp.nets import (
    Adam,
    GaussianTanhPolicy,
    Mlp,
    tanh_gaussian_logp,
    tanh_gaussian_sample,
)
from residual_dmp.ppo import (
    logp_loss_and_grads,
    surrogate_loss_and_grads,
    value_loss_and_grads,
)
from residual_dmp.sac import actor_loss_and_grads, critic_loss_and_grads

REL_TOL = 1e-4


def fd_grads(loss_fn, params, h=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12))


@pytest.fixture
def tiny_policy():
    rng = np.random.default_rng(11)
    policy = GaussianTanhPolicy(3, 2, (4,), rng, init_log_std=-0.5)
    # non-degenerate weights so gradients are informative
    policy.net.params[-2][:] = rng.normal(scale=0.3, size=policy.net.params[-2].shape)
    return policy


@pytest.fixture
def batch3():
    rng = np.random.default_rng(12)
    obs = rng.normal(size=(6, 3))
    u = rng.normal(size=(6, 2))
    return obs, u, rng


class TestLogProbGradients:
    def test_matches_finite_differences(self, tiny_policy, batch3):
        obs, u, _ = batch3
        _, analytic = logp_loss_and_grads(tiny_policy, obs, u)
        numeric = fd_grads(
            lambda: logp_loss_and_grads(tiny_policy, obs, u)[0],
            tiny_policy.net.params,
        )
        assert relative_error(analytic, numeric) < REL_TOL


class TestSurrogateGradients:
    def test_matches_finite_differences(self, tiny_policy, batch3):
        obs, u, rng = batch3
        mean, log_std, _, _ = tiny_policy.heads(obs)
        logp_old = tanh_gaussian_logp(u, mean, log_std, 1.0) + rng.normal(
            scale=0.05, size=obs.shape[0]
        )
        adv = rng.normal(size=obs.shape[0])
        _, analytic, _ = surrogate_loss_and_grads(
            tiny_policy, obs, u, logp_old, adv, clip_ratio=0.2, entropy_coef=1e-3
        )
        numeric = fd_grads(
            lambda: surrogate_loss_and_grads(
                tiny_policy, obs, u, logp_old, adv, 0.2, 1e-3
            )[0],
            tiny_policy.net.params,
        )
        assert relative_error(analytic, numeric) < REL_TOL

    def test_clip_zeroes_outward_gradients(self, tiny_policy, batch3):
        obs, u, _ = batch3
        mean, log_std, _, _ = tiny_policy.heads(obs)
        logp = tanh_gaussian_logp(u, mean, log_std, 1.0)
        # positive advantage with ratio far above the band: pushed-out samples
        logp_old = logp - 1.0
        adv = np.ones(obs.shape[0])
        _, grads, _ = surrogate_loss_and_grads(
            tiny_policy, obs, u, logp_old, adv, 0.2, entropy_coef=0.0
        )
        assert all(np.all(g == 0.0) for g in grads)
        # negative advantage with ratio far below the band
        logp_old = logp + 1.0
        adv = -np.ones(obs.shape[0])
        _, grads, _ = surrogate_loss_and_grads(
            tiny_policy, obs, u, logp_old, adv, 0.2, entropy_coef=0.0
        )
        assert all(np.all(g == 0.0) for g in grads)

    def test_zero_advantages_freeze_policy(self, tiny_policy, batch3):
        obs, u, _ = batch3
        mean, log_std, _, _ = tiny_policy.heads(obs)
        logp_old = tanh_gaussian_logp(u, mean, log_std, 1.0)
        _, grads, _ = surrogate_loss_and_grads(
            tiny_policy, obs, u, logp_old, np.zeros(obs.shape[0]), 0.2, 0.0
        )
        assert all(np.all(g == 0.0) for g in grads)

    def test_unit_ratio_equals_vanilla_policy_gradient(self, tiny_policy, batch3):
        obs, u, rng = batch3
        mean, log_std, _, _ = tiny_policy.heads(obs)
        logp_old = tanh_gaussian_logp(u, mean, log_std, 1.0)
        adv = rng.normal(size=obs.shape[0])
        _, analytic, _ = surrogate_loss_and_grads(
            tiny_policy, obs, u, logp_old, adv, 0.2, 0.0
        )

        def vanilla_loss():
            m, ls, _, _ = tiny_policy.heads(obs)
            lp = tanh_gaussian_logp(u, m, ls, 1.0)
            return float(-(adv * lp).mean())

        numeric = fd_grads(vanilla_loss, tiny_policy.net.params)
        assert relative_error(analytic, numeric) < REL_TOL


class TestValueGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        value = Mlp([3, 5, 1], rng)
        obs = rng.normal(size=(8, 3))
        returns = rng.normal(size=8)
        _, analytic = value_loss_and_grads(value, obs, returns)
        numeric = fd_grads(
            lambda: value_loss_and_grads(value, obs, returns)[0], value.params
        )
        assert relative_error(analytic, numeric) < REL_TOL


class TestSacGradients:
    def test_critic_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        q = Mlp([5, 6, 1], rng)
        obs = rng.normal(size=(7, 3))
        act = np.tanh(rng.normal(size=(7, 2)))
        targets = rng.normal(size=7)
        _, analytic = critic_loss_and_grads(q, obs, act, targets)
        numeric = fd_grads(
            lambda: critic_loss_and_grads(q, obs, act, targets)[0], q.params
        )
        assert relative_error(analytic, numeric) < REL_TOL

    def test_actor_matches_finite_differences(self, tiny_policy):
        rng = np.random.default_rng(15)
        q1 = Mlp([5, 6, 1], rng)
        q2 = Mlp([5, 6, 1], rng)
        obs = rng.normal(size=(6, 3))
        eps = rng.normal(size=(6, 2))
        _, analytic, _ = actor_loss_and_grads(tiny_policy, q1, q2, obs, eps, alpha=0.2)
        numeric = fd_grads(
            lambda: actor_loss_and_grads(tiny_policy, q1, q2, obs, eps, 0.2)[0],
            tiny_policy.net.params,
        )
        assert relative_error(analytic, numeric) < REL_TOL


class TestTanhGaussianDistribution:
    def test_actions_always_within_bounds(self):
        rng = np.random.default_rng(16)
        policy = GaussianTanhPolicy(3, 2, (8,), rng, init_log_std=0.5)
        obs = np.repeat(rng.normal(size=(1, 3)), 1000, axis=0)
        for _ in range(1000):
            a, _, _ = policy.sample(obs, rng)
            assert np.all(np.abs(a) <= 1.0)

    def test_deterministic_limit_is_squashed_mean(self):
        rng = np.random.default_rng(17)
        mean = np.array([[0.7, -1.2]])
        log_std = np.full((1, 2), -20.0)
        a, _, _ = tanh_gaussian_sample(mean, log_std, 1.0, rng)
        assert np.allclose(a, np.tanh(mean), atol=1e-7)

    def test_log_prob_matches_monte_carlo_density(self):
        # 1-D squashed Gaussian: histogram of 10^6 samples vs the analytic
        # density implied by the log-prob (KL < 1e-3)
        rng = np.random.default_rng(18)
        mean = np.array([[0.4]])
        log_std = np.array([[-0.6]])
        n = 1_000_000
        u = mean + np.exp(log_std) * rng.standard_normal((n, 1))
        a = np.tanh(u)
        edges = np.linspace(-1.0 + 1e-6, 1.0 - 1e-6, 151)
        hist, _ = np.histogram(a[:, 0], bins=edges)
        widths = np.diff(edges)
        centers = 0.5 * (edges[:-1] + edges[1:])
        u_centers = np.arctanh(centers)
        logp = tanh_gaussian_logp(
            u_centers[:, None], mean, log_std, 1.0
        )
        model_mass = np.exp(logp) * widths
        empirical = hist / n
        mask = empirical > 0
        kl = float(
            np.sum(empirical[mask] * np.log(empirical[mask] / model_mass[mask]))
        )
        assert kl < 1e-3


class TestAdam:
    def test_quadratic_convergence(self):
        rng = np.random.default_rng(19)
        params = [rng.normal(size=(4,))]
        opt = Adam(params, lr=0.05)
        for _ in range(500):
            opt.step(params, [2.0 * params[0]])
        assert np.max(np.abs(params[0])) < 1e-3
