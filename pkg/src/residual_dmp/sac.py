"""Soft actor-critic with twin critics and automatic temperature tuning.

Off-policy learner over a replay buffer of decision-rate transitions; each
environment iteration performs a fixed number of gradient steps.  Target
networks track the online critics by exact Polyak averaging.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .nets import LOG_2PI, Adam, GaussianTanhPolicy, Mlp, log1m_tanh2


@dataclass(frozen=True)
class SacConfig:
    replay_capacity: int = 200_000
    batch_size: int = 256
    discount: float = 0.99
    soft_update: float = 0.005
    learning_rate: float = 1e-3
    temperature_learning_rate: float = 1e-3
    updates_per_iteration: int = 32
    target_entropy: Optional[float] = None
    init_temperature: float = 0.1
    warmup_transitions: int = 300
    hidden: Sequence[int] = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if not 0.0 < self.soft_update <= 1.0:
            raise ValueError("soft update rate must lie in (0, 1]")


class ReplayBuffer:
    """Fixed-capacity ring buffer of ``(s, a, r, s', done)`` transitions."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def add(self, obs, act, rew, next_obs, done) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self) -> int:
        return self.size

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (
            self.obs[idx], self.act[idx], self.rew[idx],
            self.next_obs[idx], self.done[idx],
        )


def critic_loss_and_grads(q: Mlp, obs: np.ndarray, act: np.ndarray, targets: np.ndarray):
    """Soft Bellman regression loss and parameter gradients for one critic."""
    q_in = np.concatenate([obs, act], axis=1)
    qv, cache = q.forward(q_in)
    err = qv[:, 0] - targets
    grads, _ = q.backward(cache, (2.0 * err / err.size)[:, None])
    return float(np.mean(err**2)), grads


def actor_loss_and_grads(
    actor: GaussianTanhPolicy,
    q1: Mlp,
    q2: Mlp,
    obs: np.ndarray,
    eps: np.ndarray,
    alpha: float,
):
    """Reparameterized actor loss ``mean(alpha * logpi - min Q)`` and gradients.

    ``eps`` is the fixed standard-normal draw so the loss is a deterministic
    function of the actor parameters (critics held constant).
    """
    b = obs.shape[0]
    mean, log_std, mask, cache = actor.heads(obs)
    std = np.exp(log_std)
    u = mean + std * eps
    t = np.tanh(u)
    logp = (
        -0.5 * eps * eps - log_std - 0.5 * LOG_2PI - log1m_tanh2(u)
    ).sum(axis=1)

    q_in = np.concatenate([obs, t], axis=1)
    q1v, c1 = q1.forward(q_in)
    q2v, c2 = q2.forward(q_in)
    qmin = np.minimum(q1v[:, 0], q2v[:, 0])
    pick1 = (q1v[:, 0] <= q2v[:, 0]).astype(float)
    _, gin1 = q1.backward(c1, pick1[:, None])
    _, gin2 = q2.backward(c2, (1.0 - pick1)[:, None])
    dq_da = (gin1 + gin2)[:, obs.shape[1] :]

    dl_du = (alpha * 2.0 * t - dq_da * (1.0 - t * t)) / b
    grad_mean = dl_du
    grad_ls = (dl_du * (std * eps) - alpha / b) * mask
    grads, _ = actor.net.backward(cache, np.concatenate([grad_mean, grad_ls], axis=1))
    loss = float(np.mean(alpha * logp - qmin))
    return loss, grads, logp


class SacLearner:
    """Entropy-regularized actor plus twin Q critics over unit actions."""

    def __init__(self, obs_dim: int, act_dim: int, config: SacConfig, seed: int):
        self.config = config
        self.act_dim = act_dim
        rng = np.random.default_rng(seed)
        self.rng = np.random.default_rng(rng.integers(2**63))
        self.actor = GaussianTanhPolicy(obs_dim, act_dim, config.hidden, rng)
        self.q1 = Mlp([obs_dim + act_dim, *config.hidden, 1], rng)
        self.q2 = Mlp([obs_dim + act_dim, *config.hidden, 1], rng)
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        self.actor_opt = Adam(self.actor.net.params, lr=config.learning_rate)
        self.q1_opt = Adam(self.q1.params, lr=config.learning_rate)
        self.q2_opt = Adam(self.q2.params, lr=config.learning_rate)
        self.log_temperature = float(np.log(config.init_temperature))
        self._temp_m = 0.0
        self._temp_v = 0.0
        self._temp_t = 0
        self.target_entropy = (
            -float(act_dim) if config.target_entropy is None else config.target_entropy
        )
        self.replay = ReplayBuffer(config.replay_capacity, obs_dim, act_dim)

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_temperature))

    def act(self, obs_vec: np.ndarray, deterministic: bool = False):
        """Unit action plus ``(pre_squash, log_prob)`` bookkeeping."""
        if deterministic:
            a = self.actor.mean_action(obs_vec)
            return a, np.arctanh(np.clip(a, -0.999999, 0.999999)), 0.0
        return self.actor.act_single(obs_vec, self.rng)

    def mean_action(self, obs_vec: np.ndarray) -> np.ndarray:
        return self.actor.mean_action(obs_vec)

    def observe(self, obs, act, rew, next_obs, done) -> None:
        self.replay.add(obs, act, rew, next_obs, done)

    def update_iteration(self) -> dict:
        """Exactly ``updates_per_iteration`` gradient steps (if warm enough)."""
        cfg = self.config
        if len(self.replay) < max(cfg.batch_size, cfg.warmup_transitions):
            return {"updated": False, "n_steps": 0}
        diag = {"updated": True, "n_steps": cfg.updates_per_iteration,
                "critic_loss": 0.0, "actor_loss": 0.0, "temperature": self.temperature}
        for _ in range(cfg.updates_per_iteration):
            batch = self.replay.sample(cfg.batch_size, self.rng)
            self._gradient_step(batch, diag)
        diag["temperature"] = self.temperature
        return diag

    def _gradient_step(self, batch, diag) -> None:
        cfg = self.config
        obs, act, rew, next_obs, done = batch
        b = obs.shape[0]
        alpha = self.temperature

        a_next, _, logp_next = self.actor.sample(next_obs, self.rng)
        q_in_next = np.concatenate([next_obs, a_next], axis=1)
        q_next = np.minimum(self.q1_target(q_in_next)[:, 0], self.q2_target(q_in_next)[:, 0])
        y = rew + cfg.discount * (1.0 - done) * (q_next - alpha * logp_next)

        for q, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            loss, grads = critic_loss_and_grads(q, obs, act, y)
            if all(np.all(np.isfinite(g)) for g in grads):
                opt.step(q.params, grads)
            diag["critic_loss"] = loss

        eps = self.rng.standard_normal((b, self.act_dim))
        actor_loss, grads, logp = actor_loss_and_grads(
            self.actor, self.q1, self.q2, obs, eps, alpha
        )
        if all(np.all(np.isfinite(g)) for g in grads):
            self.actor_opt.step(self.actor.net.params, grads)
        diag["actor_loss"] = actor_loss

        grad_temp = -float(np.mean(logp + self.target_entropy))
        self._temp_step(grad_temp)

        rho = cfg.soft_update
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for p, tp in zip(online.params, target.params):
                tp *= 1.0 - rho
                tp += rho * p

    def _temp_step(self, grad: float) -> None:
        lr, b1, b2, eps = self.config.temperature_learning_rate, 0.9, 0.999, 1e-8
        self._temp_t += 1
        self._temp_m = b1 * self._temp_m + (1 - b1) * grad
        self._temp_v = b2 * self._temp_v + (1 - b2) * grad * grad
        m_hat = self._temp_m / (1 - b1**self._temp_t)
        v_hat = self._temp_v / (1 - b2**self._temp_t)
        self.log_temperature -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.actor.net.get_flat(), self.q1.get_flat(), self.q2.get_flat(),
             self.q1_target.get_flat(), self.q2_target.get_flat(),
             [self.log_temperature]]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        nets = [self.actor.net, self.q1, self.q2, self.q1_target, self.q2_target]
        offset = 0
        for net in nets:
            n = net.get_flat().size
            net.set_flat(flat[offset : offset + n])
            offset += n
        self.log_temperature = float(flat[offset])
