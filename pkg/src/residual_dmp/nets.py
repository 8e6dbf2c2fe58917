"""Small feed-forward networks with hand-written backprop, plus Adam.

Networks here are tiny (tens of units), run on CPU, and must expose exact
analytic gradients so the learners can be verified against central finite
differences.  Parameters are stored as a flat list ``[W0, b0, W1, b1, ...]``
with ReLU hidden activations and a linear output layer.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def log1m_tanh2(u: np.ndarray) -> np.ndarray:
    """Numerically stable ``log(1 - tanh(u)^2)``."""
    return 2.0 * (np.log(2.0) - u - softplus(-2.0 * u))


class Mlp:
    """ReLU MLP with explicit forward caches and backward passes."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator,
                 final_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.params: List[np.ndarray] = []
        for i in range(len(sizes) - 1):
            fan_in = sizes[i]
            scale = np.sqrt(2.0 / fan_in)
            if i == len(sizes) - 2:
                scale *= final_scale
            self.params.append(rng.normal(0.0, scale, size=(fan_in, sizes[i + 1])))
            self.params.append(np.zeros(sizes[i + 1]))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        """Returns ``(output, cache)``; ``x`` is ``(batch, in_dim)``."""
        h = np.atleast_2d(x)
        cache = []
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ w + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Backprop per-sample output gradients; returns (param grads, input grad)."""
        grads = [None] * len(self.params)
        g = np.atleast_2d(grad_out)
        for i in reversed(range(self.n_layers)):
            h_in, z = cache[i]
            if i < self.n_layers - 1:
                g = g * (z > 0.0)
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for i, p in enumerate(self.params):
            n = p.size
            self.params[i] = flat[offset : offset + n].reshape(p.shape).copy()
            offset += n
        if offset != flat.size:
            raise ValueError("flat parameter size mismatch")


class Adam:
    """Standard Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: List[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[i] / b1t) / (np.sqrt(self.v[i] / b2t) + self.eps)


def split_head(out: np.ndarray, act_dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a policy net output into mean, clamped log-std, and a clamp mask."""
    mean = out[:, :act_dim]
    raw = out[:, act_dim:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    mask = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(float)
    return mean, log_std, mask


def tanh_gaussian_sample(
    mean: np.ndarray, log_std: np.ndarray, bounds: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample squashed actions; returns ``(action, pre_squash, log_prob)``."""
    std = np.exp(log_std)
    noise = rng.standard_normal(mean.shape)
    u = mean + std * noise
    action = bounds * np.tanh(u)
    logp = tanh_gaussian_logp(u, mean, log_std, bounds)
    return action, u, logp


def tanh_gaussian_logp(
    u: np.ndarray, mean: np.ndarray, log_std: np.ndarray, bounds: np.ndarray
) -> np.ndarray:
    """Log-density of the squashed action identified by pre-squash value ``u``."""
    std = np.exp(log_std)
    z = (u - mean) / std
    gauss = -0.5 * z * z - log_std - 0.5 * LOG_2PI
    correction = np.log(bounds) + log1m_tanh2(u)
    return (gauss - correction).sum(axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> np.ndarray:
    """Entropy of the pre-squash Gaussian, summed over action dimensions."""
    return (log_std + 0.5 * (1.0 + LOG_2PI)).sum(axis=-1)


class GaussianTanhPolicy:
    """Stochastic policy: MLP -> (mean, log-std) -> tanh-squashed unit actions.

    Actions live in ``[-1, 1]`` per dimension; physical bounds are applied by
    the caller.  The small final-layer scale keeps initial corrections near
    zero so the base policy dominates early.
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden: Sequence[int],
                 rng: np.random.Generator, init_log_std: float = -0.7):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = Mlp([obs_dim, *hidden, 2 * act_dim], rng, final_scale=0.01)
        self.net.params[-1][act_dim:] = init_log_std

    def heads(self, obs: np.ndarray):
        """Forward pass returning ``(mean, log_std, clamp_mask, cache)``."""
        out, cache = self.net.forward(np.atleast_2d(obs))
        mean, log_std, mask = split_head(out, self.act_dim)
        return mean, log_std, mask, cache

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Returns ``(action, pre_squash, log_prob)`` for a batch of observations."""
        mean, log_std, _, _ = self.heads(obs)
        return tanh_gaussian_sample(mean, log_std, 1.0, rng)

    def act_single(self, obs_vec: np.ndarray, rng: np.random.Generator):
        a, u, logp = self.sample(obs_vec[None, :], rng)
        return a[0], u[0], float(logp[0])

    def mean_action(self, obs_vec: np.ndarray) -> np.ndarray:
        mean, _, _, _ = self.heads(obs_vec[None, :])
        return np.tanh(mean[0])
