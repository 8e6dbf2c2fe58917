"""Proximal policy optimization with the clipped surrogate objective.

On-policy learner over batches of episode records.  Advantages come from
generalized advantage estimation; the clipped term's gradient is exactly
zero for samples whose ratio sits outside the clip band with the advantage
pushing it further out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .nets import Adam, GaussianTanhPolicy, Mlp, gaussian_entropy, tanh_gaussian_logp
from .rl import EpisodeRecord


@dataclass(frozen=True)
class PpoConfig:
    clip_ratio: float = 0.2
    epochs: int = 10
    minibatch: int = 64
    learning_rate: float = 3e-4
    value_learning_rate: float = 1e-3
    discount: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 1e-3
    target_kl: float = 0.05
    batch_episodes: int = 20
    hidden: Sequence[int] = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip ratio must lie in (0, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")


def logp_loss_and_grads(policy: GaussianTanhPolicy, obs: np.ndarray, u: np.ndarray):
    """Mean squashed-Gaussian log-density and its parameter gradients.

    The pre-squash actions ``u`` are held fixed, as in the PPO ratio.
    """
    mean, log_std, mask, cache = policy.heads(obs)
    std = np.exp(log_std)
    z = (u - mean) / std
    logp = tanh_gaussian_logp(u, mean, log_std, 1.0)
    b = obs.shape[0]
    grad_mean = (z / std) / b
    grad_ls = ((z * z - 1.0) / b) * mask
    grads, _ = policy.net.backward(cache, np.concatenate([grad_mean, grad_ls], axis=1))
    return float(logp.mean()), grads


def surrogate_loss_and_grads(
    policy: GaussianTanhPolicy,
    obs: np.ndarray,
    u: np.ndarray,
    logp_old: np.ndarray,
    adv: np.ndarray,
    clip_ratio: float,
    entropy_coef: float = 0.0,
):
    """Negative clipped surrogate (plus entropy bonus) and its gradients.

    The gradient of the clipped term is exactly zero for samples whose ratio
    sits outside the clip band with the advantage pushing it further out.
    """
    mean, log_std, mask, cache = policy.heads(obs)
    std = np.exp(log_std)
    z = (u - mean) / std
    logp = tanh_gaussian_logp(u, mean, log_std, 1.0)
    ratio = np.exp(np.clip(logp - logp_old, -20.0, 20.0))
    b = obs.shape[0]

    outside = ((adv >= 0.0) & (ratio >= 1.0 + clip_ratio)) | (
        (adv < 0.0) & (ratio <= 1.0 - clip_ratio)
    )
    surr = np.where(outside, np.clip(ratio, 1 - clip_ratio, 1 + clip_ratio), ratio) * adv
    loss = float(-surr.mean() - entropy_coef * gaussian_entropy(log_std).mean())

    dl_dlogp = np.where(outside, 0.0, -ratio * adv) / b
    grad_mean = dl_dlogp[:, None] * (z / std)
    grad_ls = (dl_dlogp[:, None] * (z * z - 1.0) - entropy_coef / b) * mask
    grads, _ = policy.net.backward(cache, np.concatenate([grad_mean, grad_ls], axis=1))
    diagnostics = {
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_ratio)),
        "ratio": ratio,
    }
    return loss, grads, diagnostics


def value_loss_and_grads(value: Mlp, obs: np.ndarray, returns: np.ndarray):
    """Mean squared error of the critic and its parameter gradients."""
    v, cache = value.forward(obs)
    err = v[:, 0] - returns
    grads, _ = value.backward(cache, (2.0 * err / err.size)[:, None])
    return float(np.mean(err**2)), grads


class PpoLearner:
    """Clipped-surrogate policy gradient with a separate value network."""

    def __init__(self, obs_dim: int, act_dim: int, config: PpoConfig, seed: int):
        self.config = config
        rng = np.random.default_rng(seed)
        self.rng = np.random.default_rng(rng.integers(2**63))
        self.policy = GaussianTanhPolicy(obs_dim, act_dim, config.hidden, rng)
        self.value = Mlp([obs_dim, *config.hidden, 1], rng)
        self.policy_opt = Adam(self.policy.net.params, lr=config.learning_rate)
        self.value_opt = Adam(self.value.params, lr=config.value_learning_rate)

    def act(self, obs_vec: np.ndarray):
        """Sample a unit action; returns ``(action, pre_squash, log_prob, value)``."""
        a, u, logp = self.policy.act_single(obs_vec, self.rng)
        v = float(self.value(obs_vec[None, :])[0, 0])
        return a, u, logp, v

    def mean_action(self, obs_vec: np.ndarray) -> np.ndarray:
        return self.policy.mean_action(obs_vec)

    def _advantages(self, records: Sequence[EpisodeRecord]):
        gamma, lam = self.config.discount, self.config.gae_lambda
        adv_all, ret_all = [], []
        for rec in records:
            n = rec.rewards.shape[0]
            v_next = 0.0 if rec.terminal else float(
                self.value(rec.final_observation[None, :])[0, 0]
            )
            values = np.append(rec.values, v_next)
            adv = np.zeros(n)
            running = 0.0
            for t in reversed(range(n)):
                delta = rec.rewards[t] + gamma * values[t + 1] - values[t]
                running = delta + gamma * lam * running
                adv[t] = running
            adv_all.append(adv)
            ret_all.append(adv + rec.values)
        return np.concatenate(adv_all), np.concatenate(ret_all)

    def update(self, records: Sequence[EpisodeRecord]) -> dict:
        """One PPO update over a batch of episodes; returns diagnostics."""
        if not records:
            raise ValueError("need at least one episode")
        cfg = self.config
        obs = np.concatenate([r.observations for r in records])
        u = np.concatenate([r.pre_squash for r in records])
        logp_old = np.concatenate([r.log_probs for r in records])
        adv, returns = self._advantages(records)
        adv_std = adv.std()
        if adv_std > 1e-8:
            adv = (adv - adv.mean()) / adv_std

        n = obs.shape[0]
        diag = {"policy_loss": 0.0, "value_loss": 0.0, "approx_kl": 0.0,
                "clip_fraction": 0.0, "updated": True, "n_samples": n}
        stop = False
        for epoch in range(cfg.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = order[start : start + cfg.minibatch]
                if not self._policy_minibatch(obs[idx], u[idx], logp_old[idx], adv[idx], diag):
                    diag["updated"] = False
                    return diag
                self._value_minibatch(obs[idx], returns[idx], diag)
            kl = self._approx_kl(obs, u, logp_old)
            diag["approx_kl"] = kl
            if kl > cfg.target_kl:
                stop = True
            if stop:
                break
        return diag

    def _policy_minibatch(self, obs, u, logp_old, adv, diag) -> bool:
        cfg = self.config
        loss, grads, extras = surrogate_loss_and_grads(
            self.policy, obs, u, logp_old, adv, cfg.clip_ratio, cfg.entropy_coef
        )
        if not all(np.all(np.isfinite(g)) for g in grads):
            return False
        self.policy_opt.step(self.policy.net.params, grads)
        diag["policy_loss"] = loss
        diag["clip_fraction"] = extras["clip_fraction"]
        return True

    def _value_minibatch(self, obs, returns, diag) -> None:
        loss, grads = value_loss_and_grads(self.value, obs, returns)
        if all(np.all(np.isfinite(g)) for g in grads):
            self.value_opt.step(self.value.params, grads)
        diag["value_loss"] = loss

    def _approx_kl(self, obs, u, logp_old) -> float:
        mean, log_std, _, _ = self.policy.heads(obs)
        logp = tanh_gaussian_logp(u, mean, log_std, 1.0)
        return float(np.mean(logp_old - logp))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.policy.net.get_flat(), self.value.get_flat()])

    def set_flat(self, flat: np.ndarray) -> None:
        n_pol = self.policy.net.get_flat().size
        self.policy.net.set_flat(flat[:n_pol])
        self.value.set_flat(flat[n_pol:])
