"""Episodic Gaussian-perturbation policy gradient over a parameter vector.

Used for the two in-formulation exploration loci: the learned object is a
flat vector (forcing-weight deltas, or coupling-force weights) perturbed
with Gaussian noise and updated from whole-episode returns via symmetric
(mirrored) sampling.

``noise_per_step=False`` draws one perturbation per episode (episodic
exploration, the sample-efficient regime).  ``noise_per_step=True``
resamples the perturbation at every decision, in which case credit is
assigned to the time-averaged noise direction, a much weaker signal; this
models step-based exploration of in-formulation terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class EpisodicConfig:
    sigma: float = 1.0
    learning_rate: float = 0.15
    noise_per_step: bool = False
    max_decisions: int = 256

    def __post_init__(self):
        if self.sigma <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("sigma and learning rate must be positive")


class EpisodeNoise:
    """Per-episode perturbation stream handed to the rollout loop."""

    def __init__(self, base: np.ndarray, noise: np.ndarray, per_step: bool):
        self.base = base
        self.noise = noise
        self.per_step = per_step
        self._used = 0

    def perturbation(self, decision_index: int) -> np.ndarray:
        if self.per_step:
            row = self.noise[min(decision_index, self.noise.shape[0] - 1)]
            self._used = max(self._used, min(decision_index, self.noise.shape[0] - 1) + 1)
            return self.base + row
        return self.base + self.noise[0]

    def credited_direction(self) -> np.ndarray:
        if self.per_step:
            used = max(self._used, 1)
            return self.noise[:used].mean(axis=0)
        return self.noise[0]


class EpisodicPerturbationLearner:
    """Mirrored-sampling episodic policy gradient on a flat parameter vector."""

    def __init__(self, dim: int, config: EpisodicConfig, seed: int):
        self.config = config
        self.dim = dim
        self.mean = np.zeros(dim)
        self.rng = np.random.default_rng(seed)
        self._pending_eps: Optional[np.ndarray] = None
        self._pending_return: Optional[float] = None
        self._pending_direction: Optional[np.ndarray] = None
        self.updates = 0

    def start_episode(self, evaluate: bool = False) -> EpisodeNoise:
        """Draw the episode's perturbation; mirrored on every second episode."""
        cfg = self.config
        rows = cfg.max_decisions if cfg.noise_per_step else 1
        if evaluate:
            return EpisodeNoise(self.mean.copy(), np.zeros((1, self.dim)), False)
        if self._pending_eps is None:
            eps = cfg.sigma * self.rng.standard_normal((rows, self.dim))
            self._pending_eps = eps
        else:
            eps = -self._pending_eps
        return EpisodeNoise(self.mean.copy(), eps, cfg.noise_per_step)

    def finish_episode(self, episode_return: float, noise: EpisodeNoise) -> None:
        """Accumulate the mirrored pair; update the mean once both are in."""
        if self._pending_return is None:
            self._pending_return = episode_return
            self._pending_direction = noise.credited_direction()
            return
        r_plus = self._pending_return
        direction = self._pending_direction
        r_minus = episode_return
        sigma2 = self.config.sigma**2
        step = self.config.learning_rate * (r_plus - r_minus) / 2.0
        self.mean += step * direction / sigma2
        self._pending_eps = None
        self._pending_return = None
        self._pending_direction = None
        self.updates += 1
