"""Training loops: residual SAC/PPO, episodic loci, pure and hybrid RL.

All loops are deterministic given (config, seed): every random draw comes
from generators derived from the seed via named spawn keys, and evaluation
always uses a stream disjoint from training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .env import EnvConfig, ToyInsertionEnv
from .episodic import EpisodicConfig, EpisodicPerturbationLearner
from .policies import ActionBounds, ExplorationLocus
from .ppo import PpoConfig, PpoLearner
from .rl import DenseReward, EpisodeRecord, curriculum_step
from .runner import (
    PURE_BOUNDS,
    NeuralAgent,
    TaskSetup,
    run_episode,
)
from .sac import SacConfig, SacLearner

OBS_DIM = 20


@dataclass(frozen=True)
class CurriculumPlan:
    """Progressive widening of the start radius on windowed success."""

    initial_radius: float = 0.02
    increment: float = 0.02
    threshold: float = 0.8
    window: int = 25


@dataclass
class TrainCurve:
    """Per-episode training trace."""

    returns: List[float]
    successes: List[bool]
    peak_forces: List[float]
    radii: List[float]

    @staticmethod
    def empty() -> "TrainCurve":
        return TrainCurve([], [], [], [])

    def append(self, ret: float, success: bool, peak: float, radius: float) -> None:
        self.returns.append(ret)
        self.successes.append(success)
        self.peak_forces.append(peak)
        self.radii.append(radius)

    @property
    def n_episodes(self) -> int:
        return len(self.returns)

    def rolling_success(self, window: int = 25) -> np.ndarray:
        s = np.asarray(self.successes, dtype=float)
        if s.size == 0:
            return s
        out = np.empty_like(s)
        for i in range(s.size):
            lo = max(0, i - window + 1)
            out[i] = s[lo : i + 1].mean()
        return out

    def episodes_to_reach(self, rate: float, window: int = 25) -> Optional[int]:
        """First episode index whose trailing-window success clears ``rate``."""
        roll = self.rolling_success(window)
        hits = np.nonzero(roll >= rate)[0]
        return int(hits[0]) + 1 if hits.size else None


def _train_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def _window_rate(curve: TrainCurve, window: int) -> float:
    s = curve.successes[-window:]
    return float(np.mean(s)) if len(s) >= window else 0.0


def _curriculum_env(
    setup: TaskSetup, radius: float, config_override: Optional[EnvConfig] = None
) -> ToyInsertionEnv:
    cfg = config_override if config_override is not None else setup.config
    return ToyInsertionEnv(cfg.with_radius(radius))


def _push_transitions(learner: SacLearner, rec: EpisodeRecord) -> None:
    n = rec.rewards.shape[0]
    for i in range(n):
        next_obs = rec.observations[i + 1] if i + 1 < n else rec.final_observation
        done = rec.terminal and i == n - 1
        learner.observe(rec.observations[i], rec.actions[i], rec.rewards[i], next_obs, done)


def train_sac(
    setup: TaskSetup,
    episodes: int,
    seed: int,
    locus: ExplorationLocus = ExplorationLocus.TASK_SPACE,
    full_pose: bool = False,
    mode: str = "residual",
    bounds: Optional[ActionBounds] = None,
    config: Optional[SacConfig] = None,
    curriculum: Optional[CurriculumPlan] = CurriculumPlan(),
    learner: Optional[SacLearner] = None,
    env_config: Optional[EnvConfig] = None,
) -> Tuple[SacLearner, TrainCurve]:
    """Off-policy residual training; also drives the pure/hybrid ablations."""
    act_dim = 6 if full_pose else 3
    if learner is None:
        learner = SacLearner(OBS_DIM, act_dim, config or SacConfig(), seed)
    if bounds is None:
        bounds = PURE_BOUNDS if mode in ("pure", "hybrid") else setup.bounds
    agent = NeuralAgent(learner, bounds, full_pose)
    rng = _train_rng(seed, 0x5AC)
    task_cfg = env_config if env_config is not None else setup.config
    cap = float(task_cfg.start_radius.max())
    radius = min(curriculum.initial_radius, cap) if curriculum else cap
    env = _curriculum_env(setup, radius, task_cfg)
    curve = TrainCurve.empty()

    for _ in range(episodes):
        rec = run_episode(env, setup, agent, rng, mode=mode, locus=locus, collect=True)
        _push_transitions(learner, rec)
        learner.update_iteration()
        curve.append(rec.episode_return(1.0), rec.success, rec.peak_force, radius)
        if curriculum and radius < cap:
            new_radius = curriculum_step(
                radius,
                _window_rate(curve, curriculum.window),
                threshold=curriculum.threshold,
                increment=curriculum.increment,
                cap=cap,
            )
            if new_radius != radius:
                radius = new_radius
                env = _curriculum_env(setup, radius, task_cfg)
    return learner, curve


def train_ppo(
    setup: TaskSetup,
    episodes: int,
    seed: int,
    locus: ExplorationLocus = ExplorationLocus.TASK_SPACE,
    full_pose: bool = False,
    mode: str = "residual",
    bounds: Optional[ActionBounds] = None,
    config: Optional[PpoConfig] = None,
    curriculum: Optional[CurriculumPlan] = CurriculumPlan(),
    learner: Optional[PpoLearner] = None,
    env_config: Optional[EnvConfig] = None,
) -> Tuple[PpoLearner, TrainCurve]:
    """On-policy residual training in batches of episodes."""
    act_dim = 6 if full_pose else 3
    cfg = config or PpoConfig()
    if learner is None:
        learner = PpoLearner(OBS_DIM, act_dim, cfg, seed)
    if bounds is None:
        bounds = PURE_BOUNDS if mode in ("pure", "hybrid") else setup.bounds
    agent = NeuralAgent(learner, bounds, full_pose)
    rng = _train_rng(seed, 0x990)
    task_cfg = env_config if env_config is not None else setup.config
    cap = float(task_cfg.start_radius.max())
    radius = min(curriculum.initial_radius, cap) if curriculum else cap
    env = _curriculum_env(setup, radius, task_cfg)
    curve = TrainCurve.empty()

    batch: List[EpisodeRecord] = []
    for _ in range(episodes):
        rec = run_episode(env, setup, agent, rng, mode=mode, locus=locus, collect=True)
        curve.append(rec.episode_return(1.0), rec.success, rec.peak_force, radius)
        if rec.rewards.size:
            batch.append(rec)
        if len(batch) >= cfg.batch_episodes:
            learner.update(batch)
            batch = []
        if curriculum and radius < cap:
            new_radius = curriculum_step(
                radius,
                _window_rate(curve, curriculum.window),
                threshold=curriculum.threshold,
                increment=curriculum.increment,
                cap=cap,
            )
            if new_radius != radius:
                radius = new_radius
                env = _curriculum_env(setup, radius, task_cfg)
    if batch:
        learner.update(batch)
    return learner, curve


def train_episodic(
    setup: TaskSetup,
    episodes: int,
    seed: int,
    locus: ExplorationLocus,
    sigma: float = 4.0,
    learning_rate: float = 0.2,
    reward_kind: str = "exp-l1",
) -> Tuple[EpisodicPerturbationLearner, TrainCurve]:
    """Episodic perturbation learning at the in-formulation loci.

    The coupling-term locus resamples its noise at every decision (step-based
    exploration); the parameter-space locus holds one draw per episode.
    """
    if locus not in (ExplorationLocus.PARAMETER_SPACE, ExplorationLocus.COUPLING_TERM):
        raise ValueError("episodic training applies to the in-formulation loci")
    dim = setup.dmp.weights.size
    per_step = locus is ExplorationLocus.COUPLING_TERM
    n_decisions = setup.n_decisions
    learner = EpisodicPerturbationLearner(
        dim,
        EpisodicConfig(
            sigma=sigma,
            learning_rate=learning_rate,
            noise_per_step=per_step,
            max_decisions=n_decisions,
        ),
        seed,
    )
    rng = _train_rng(seed, 0xE91)
    env = ToyInsertionEnv(setup.config)
    curve = TrainCurve.empty()
    radius = float(setup.config.start_radius.max())
    for _ in range(episodes):
        noise = learner.start_episode()
        rec = run_episode(
            env, setup, agent=None, rng=rng, mode="residual",
            locus=locus, episode_noise=noise, collect=False,
        )
        ret = (
            math.exp(-rec.final_l1) if reward_kind == "exp-l1" else float(rec.success)
        )
        learner.finish_episode(ret, noise)
        curve.append(ret, rec.success, rec.peak_force, radius)
    return learner, curve


def pure_rl_env_config(setup: TaskSetup) -> EnvConfig:
    """Pure RL uses the engineered dense reward instead of the sparse one."""
    return replace(setup.config, reward=DenseReward())


def save_learner(path, learner, extra: Optional[dict] = None) -> None:
    """Checkpoint a neural learner: JSON manifest plus flat float64 blob."""
    from .rl import config_hash, save_checkpoint

    if isinstance(learner, SacLearner):
        kind = "sac"
        cfg = learner.config
        arch = {"hidden": list(cfg.hidden), "act_dim": learner.act_dim,
                "obs_dim": learner.actor.obs_dim}
    elif isinstance(learner, PpoLearner):
        kind = "ppo"
        cfg = learner.config
        arch = {"hidden": list(cfg.hidden), "act_dim": learner.policy.act_dim,
                "obs_dim": learner.policy.obs_dim}
    else:
        raise TypeError(f"cannot checkpoint {type(learner).__name__}")
    manifest = {
        "kind": kind,
        "architecture": arch,
        "config_hash": config_hash(arch),
    }
    if extra:
        manifest.update(extra)
    save_checkpoint(path, manifest, learner.get_flat())


def load_learner(path):
    """Rebuild a checkpointed learner; returns ``(learner, manifest)``."""
    from .rl import load_checkpoint

    manifest, flat = load_checkpoint(path)
    arch = manifest["architecture"]
    if manifest["kind"] == "sac":
        learner = SacLearner(
            arch["obs_dim"], arch["act_dim"],
            SacConfig(hidden=tuple(arch["hidden"])), seed=0,
        )
    elif manifest["kind"] == "ppo":
        learner = PpoLearner(
            arch["obs_dim"], arch["act_dim"],
            PpoConfig(hidden=tuple(arch["hidden"])), seed=0,
        )
    else:
        raise ValueError(f"unknown checkpoint kind {manifest['kind']!r}")
    learner.set_flat(flat)
    return learner, manifest
