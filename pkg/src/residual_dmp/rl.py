"""Shared learner machinery: rewards, returns, episode records, checkpoints.

The sparse reward is a success indicator granted when the insertion distance
falls below a tolerance; the dense reward used by the pure-RL baseline is
``-(alpha * L1 + beta / (L2 - epsilon))`` with a guarded singularity.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparseReward:
    """Success indicator: 1 iff the L2 distance to full insertion is <= kappa."""

    kappa: float = 0.002

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class DenseReward:
    """Engineered shaping reward with an inverse-distance attraction term."""

    alpha: float = 10.0
    beta: float = 0.002
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.beta <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("beta and epsilon must be positive")


RewardSpec = Union[SparseReward, DenseReward]


def sparse_reward(distance_l2: float, kappa: float) -> float:
    """Indicator reward; the boundary ``distance == kappa`` counts as success."""
    if distance_l2 < 0.0:
        raise ValueError("distance must be non-negative")
    return 1.0 if distance_l2 <= kappa else 0.0


def dense_reward(l1: float, l2: float, spec: DenseReward) -> float:
    """``-(alpha * L1 + beta / (L2 - epsilon))``, floored near the singularity.

    For ``L2 <= epsilon`` the inverse term would blow up; the guard clamps the
    denominator at ``epsilon`` and logs the event.
    """
    denom = l2 - spec.epsilon
    if denom < spec.epsilon:
        logger.warning("dense reward singularity guard engaged at L2=%.3e", l2)
        denom = spec.epsilon
    return -(spec.alpha * l1 + spec.beta / denom)


def compute_return(rewards, discount: float) -> float:
    """Discounted trajectory return ``sum_t discount^t * r_t``."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        return 0.0
    if not np.all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")
    return float(rewards @ discount ** np.arange(rewards.size))


def curriculum_step(
    current_radius: float,
    success_rate_window: float,
    threshold: float = 0.8,
    increment: float = 0.015,
    cap: float = 0.015,
) -> float:
    """Widen the start-sampling radius once the windowed success rate clears
    the promotion threshold; never exceeds the task's target radius."""
    if current_radius < 0.0:
        raise ValueError("radius must be non-negative")
    if success_rate_window >= threshold:
        return min(current_radius + increment, cap)
    return min(current_radius, cap)


@dataclass
class EpisodeRecord:
    """Decision-rate trajectory of one episode plus its outcome metrics.

    ``force_mags`` is sampled at the simulation rate (one entry per
    environment step) so force statistics do not alias the decision rate.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    pre_squash: np.ndarray
    final_observation: np.ndarray
    terminal: bool
    success: bool
    force_mags: np.ndarray
    env_dt: float
    insertion_time: float
    broken: bool = False
    final_l1: float = 0.0
    final_l2: float = 0.0
    start_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    start_angle: float = 0.0

    def __post_init__(self):
        n = self.rewards.shape[0]
        for name in ("observations", "actions", "log_probs", "values", "pre_squash"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} length does not match rewards")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")

    @property
    def peak_force(self) -> float:
        return float(self.force_mags.max()) if self.force_mags.size else 0.0

    @property
    def mean_force(self) -> float:
        return float(self.force_mags.mean()) if self.force_mags.size else 0.0

    def episode_return(self, discount: float = 1.0) -> float:
        return compute_return(self.rewards, discount)


def config_hash(config) -> str:
    """Stable short hash of any JSON-serializable config structure."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: Union[str, Path], manifest: dict, flat_params: np.ndarray) -> None:
    """JSON manifest next to a flat little-endian float64 parameter blob."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest)
    manifest["n_params"] = int(flat_params.size)
    manifest["params_file"] = path.with_suffix(".bin").name
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    path.with_suffix(".bin").write_bytes(flat_params.astype("<f8").tobytes())


def load_checkpoint(path: Union[str, Path]):
    """Returns ``(manifest, flat_params)`` written by :func:`save_checkpoint`."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    blob = path.with_suffix(".bin").read_bytes()
    flat = np.frombuffer(blob, dtype="<f8").astype(float)
    if flat.size != manifest["n_params"]:
        raise ValueError("parameter blob size does not match manifest")
    return manifest, flat
