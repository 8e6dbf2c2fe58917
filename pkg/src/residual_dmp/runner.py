"""Episode execution: base DMP set-point streams plus residual corrections.

The base policy is an open-loop full-pose DMP replay started from the
sampled start pose; a proportional recovery term pulls the peg back toward
the set-point stream (standing in for the impedance controller).  Residual
corrections act at the decision rate (every ``decision_interval`` simulation
steps, mirroring the 100Hz/10Hz hierarchy as a rate ratio) and are held
between decisions.

Execution modes:

* ``residual``: base + gated residual composed in task space;
* ``pure``: no base policy, the learner drives the full twist from t = 0;
* ``hybrid``: base policy alone until the gate time, then the learner alone
  (switching, not addition).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .dmp import CanonicalState, DmpParams, DmpState, dmp_step, fit_from_demo
from .demos import make_insertion_demo
from .env import EnvConfig, ToyInsertionEnv, make_task
from .episodic import EpisodeNoise
from .nets import GaussianTanhPolicy
from .orientation import (
    OrientationDmpParams,
    OrientationState,
    fit_orientation_dmp,
    orientation_dmp_step,
)
from .policies import (
    ActionBounds,
    ExplorationLocus,
    Observation,
    ResidualAction,
    LinearPolicyState,
    compose_full_pose,
    linear_policy_act,
    linear_policy_update,
    residual_schedule,
)
from .quaternions import UnitQuaternion, geodesic_angle
from .rl import EpisodeRecord

MODES = ("residual", "pure", "hybrid")

DEFAULT_DMP_ALPHA_V = 10.0
PURE_BOUNDS = ActionBounds(translation=0.05, rotation=0.2)


@dataclass(frozen=True)
class TaskSetup:
    """Everything needed to run episodes on one task."""

    config: EnvConfig
    dmp: DmpParams
    orientation_dmp: OrientationDmpParams
    bounds: ActionBounds = ActionBounds()
    gate_fraction: float = 0.5
    decision_interval: int = 10
    track_gain: float = 0.5

    @property
    def n_decisions(self) -> int:
        return math.ceil(self.config.max_steps / self.decision_interval)

    def with_config(self, config: EnvConfig) -> "TaskSetup":
        return replace(self, config=config)


def build_task(
    preset: str,
    seed: int = 0,
    n_basis: int = 40,
    n_basis_orientation: int = 70,
    dmp_alpha_v: float = DEFAULT_DMP_ALPHA_V,
    gate_fraction: float = 0.5,
) -> TaskSetup:
    """Synthesize the demonstration, fit both DMPs, and bundle the task."""
    config = make_task(preset, seed)
    demo, demo_quats = make_insertion_demo(config, dt=config.dt)
    dmp = fit_from_demo(demo, n_basis, alpha_v=dmp_alpha_v)
    orientation = fit_orientation_dmp(
        demo_quats, config.dt, n_basis_orientation, alpha_v=dmp_alpha_v
    )
    return TaskSetup(config, dmp, orientation, gate_fraction=gate_fraction)


class BaseSetpoints:
    """Per-episode base-policy set-point stream with optional injections.

    With no coupling provider the full stream is integrated up front; the
    coupling locus forces online stepping because its signal arrives at the
    decision rate.
    """

    def __init__(
        self,
        setup: TaskSetup,
        start_pos: np.ndarray,
        start_quat: UnitQuaternion,
        weight_noise: Optional[np.ndarray] = None,
        online: bool = False,
    ):
        self.setup = setup
        self.weight_noise = weight_noise
        self.online = online
        params = setup.dmp
        n = setup.config.max_steps
        dt = setup.config.dt
        self._dt = dt
        if online:
            self._state = DmpState(
                x=np.asarray(start_pos, float),
                v=np.zeros(params.n_dims),
                s=CanonicalState(1.0, params.alpha_s, params.tau),
            )
            self._ostate = OrientationState(
                q=start_quat,
                eta=np.zeros(3),
                s=CanonicalState(1.0, setup.orientation_dmp.alpha_s, setup.orientation_dmp.tau),
            )
            self.coupling = None
            return

        params = replace(params, y0=np.asarray(start_pos, float))
        state = DmpState(
            x=params.y0.copy(),
            v=np.zeros(params.n_dims),
            s=CanonicalState(1.0, params.alpha_s, params.tau),
        )
        self.pos = np.empty((n + 1, params.n_dims))
        self.vel = np.empty_like(self.pos)
        for k in range(n + 1):
            self.pos[k] = state.x
            self.vel[k] = state.v / params.tau
            if k < n:
                state = dmp_step(state, params, dt, weight_noise=weight_noise)

        odmp = self.setup.orientation_dmp
        if (
            np.max(np.abs(odmp.weights)) < 1e-9
            and geodesic_angle(start_quat, odmp.g_q) < 1e-9
        ):
            self.quats = [odmp.g_q] * (n + 1)
        else:
            ostate = OrientationState(
                q=start_quat, eta=np.zeros(3),
                s=CanonicalState(1.0, odmp.alpha_s, odmp.tau),
            )
            self.quats = [ostate.q]
            for _ in range(n):
                ostate = orientation_dmp_step(ostate, odmp, dt)
                self.quats.append(ostate.q)

    def command(self, k: int, peg_pos: np.ndarray):
        """Base twist at step ``k``: set-point velocity plus recovery pull."""
        if self.online:
            x_sp, v_sp, q_sp = self._state.x, self._state.v / self.setup.dmp.tau, self._ostate.q
        else:
            x_sp, v_sp, q_sp = self.pos[k], self.vel[k], self.quats[k]
        v = v_sp + self.setup.track_gain * (x_sp - peg_pos)
        return v, q_sp

    def advance_online(self, coupling_force: Optional[np.ndarray]) -> None:
        self._state = dmp_step(
            self._state, self.setup.dmp, self._dt, coupling=coupling_force
        )
        self._ostate = orientation_dmp_step(self._ostate, self.setup.orientation_dmp, self._dt)

    @property
    def phase(self) -> float:
        return self._state.s.s if self.online else None


# Fixed feature scaling for the 20-dim observation vector: positions and
# goal offsets to decimeter units, velocities up, forces down to O(1).
OBS_NORMALIZATION = np.concatenate(
    [
        np.full(3, 10.0),  # position (m)
        np.full(3, 5.0),  # velocity (m/s)
        np.ones(4),  # orientation quaternion
        np.ones(3),  # angular velocity (rad/s)
        np.full(3, 0.05),  # contact force (N)
        [1.0],  # phase
        np.full(3, 10.0),  # goal offset (m)
    ]
)


def normalized_obs_vector(obs: Observation) -> np.ndarray:
    return obs.as_vector() * OBS_NORMALIZATION


def policy_act(
    policy: GaussianTanhPolicy,
    obs: Observation,
    bounds: ActionBounds,
    rng: np.random.Generator,
    full_pose: bool = True,
):
    """Sample a bounded residual action; returns ``(action, log_prob)``.

    The log-probability is of the physical action, i.e. it includes both the
    tanh change of variables and the bound scaling.
    """
    a_unit, _, logp_unit = policy.act_single(normalized_obs_vector(obs), rng)
    scales = action_scales(bounds, full_pose)
    logp = logp_unit - float(np.sum(np.log(scales)))
    return unit_to_residual(a_unit, bounds, full_pose), logp


def action_scales(bounds: ActionBounds, full_pose: bool) -> np.ndarray:
    if full_pose:
        rot = bounds.rotation / math.sqrt(3.0)
        return np.array([bounds.translation] * 3 + [rot] * 3)
    return np.full(3, bounds.translation)


def unit_to_residual(a_unit: np.ndarray, bounds: ActionBounds, full_pose: bool) -> ResidualAction:
    """Map a unit-cube action to a bounded full-pose correction.

    The rotational part is a rotation vector with per-component bound
    ``rotation / sqrt(3)`` so the total angle never exceeds the bound; a
    vanishing vector degrades gracefully to the identity correction.
    """
    scales = action_scales(bounds, full_pose)
    a = scales * a_unit
    if not full_pose:
        return ResidualAction(a.copy())
    rotvec = a[3:]
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-12:
        return ResidualAction(a[:3].copy())
    return ResidualAction(a[:3].copy(), angle, rotvec / angle)


class ResidualAgent:
    """Base adapter: produces bounded residual actions at the decision rate."""

    full_pose = False
    act_dim = 3

    def begin_episode(self, rng: np.random.Generator) -> None:
        pass

    def decide(self, obs: Observation, rng: np.random.Generator):
        """Returns ``(ResidualAction, unit_action, pre_squash, log_prob, value)``."""
        raise NotImplementedError


class ZeroAgent(ResidualAgent):
    def decide(self, obs, rng):
        zeros = np.zeros(self.act_dim)
        return ResidualAction.zero(), zeros, zeros, 0.0, 0.0


class RandomAgent(ResidualAgent):
    def __init__(self, bounds: ActionBounds, full_pose: bool = False):
        self.bounds = bounds
        self.full_pose = full_pose
        self.act_dim = 6 if full_pose else 3

    def decide(self, obs, rng):
        unit = rng.uniform(-1.0, 1.0, size=self.act_dim)
        return unit_to_residual(unit, self.bounds, self.full_pose), unit, unit, 0.0, 0.0


class LinearAgent(ResidualAgent):
    """Recursive-least-squares linear policy adapting online within episodes.

    Regresses onto the goal-directed velocity (insertion target minus current
    position, scaled and clamped); optionally paired with random orientation
    corrections for the full-pose variant.
    """

    def __init__(
        self,
        bounds: ActionBounds,
        target_gain: float = 0.5,
        random_orientation: bool = False,
        forgetting: float = 1.0,
    ):
        self.bounds = bounds
        self.target_gain = target_gain
        self.random_orientation = random_orientation
        self.full_pose = random_orientation
        self.act_dim = 3
        self.forgetting = forgetting
        self.state = LinearPolicyState.initial(forgetting=forgetting)

    def begin_episode(self, rng):
        self.state = LinearPolicyState.initial(forgetting=self.forgetting)

    def decide(self, obs, rng):
        action = linear_policy_act(self.state, obs, self.bounds)
        target = np.clip(
            self.target_gain * obs.goal_offset,
            -self.bounds.translation,
            self.bounds.translation,
        )
        self.state = linear_policy_update(self.state, obs, target)
        if self.random_orientation:
            rotvec = rng.uniform(-1.0, 1.0, size=3) * (self.bounds.rotation / math.sqrt(3.0))
            angle = float(np.linalg.norm(rotvec))
            if angle > 1e-12:
                action = ResidualAction(action.d_translation, angle, rotvec / angle)
        unit = action.d_translation / self.bounds.translation
        return action, unit, unit, 0.0, 0.0


class NeuralAgent(ResidualAgent):
    """Wraps a SAC or PPO learner; deterministic mean actions for evaluation."""

    def __init__(self, learner, bounds: ActionBounds, full_pose: bool = False,
                 deterministic: bool = False):
        self.learner = learner
        self.bounds = bounds
        self.full_pose = full_pose
        self.act_dim = 6 if full_pose else 3
        self.deterministic = deterministic

    def decide(self, obs, rng):
        vec = normalized_obs_vector(obs)
        if self.deterministic:
            unit = self.learner.mean_action(vec)
            u, logp, value = np.zeros_like(unit), 0.0, 0.0
        else:
            out = self.learner.act(vec)
            if len(out) == 4:  # PPO: (action, pre_squash, logp, value)
                unit, u, logp, value = out
            else:  # SAC: (action, pre_squash, logp)
                unit, u, logp = out
                value = 0.0
        return unit_to_residual(unit, self.bounds, self.full_pose), unit, u, logp, value


def run_episode(
    env: ToyInsertionEnv,
    setup: TaskSetup,
    agent: Optional[ResidualAgent] = None,
    rng: Optional[np.random.Generator] = None,
    mode: str = "residual",
    locus: ExplorationLocus = ExplorationLocus.TASK_SPACE,
    episode_noise: Optional[EpisodeNoise] = None,
    collect: bool = True,
) -> EpisodeRecord:
    """Run one episode and return its decision-rate record.

    ``agent`` supplies task-space residual decisions (or the whole twist in
    pure/hybrid modes); the parameter-space and coupling-term loci instead
    draw their perturbation from ``episode_noise``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(setup.config.seed)
    from .dmp import basis_activations
    from .quaternions import apply_orientation_residual

    cfg = setup.config
    K = setup.decision_interval
    obs = env.reset(rng)
    start_position = obs.position.copy()
    start_orientation = obs.orientation

    base = None
    if mode != "pure":
        online = locus is ExplorationLocus.COUPLING_TERM
        weight_noise = None
        if locus is ExplorationLocus.PARAMETER_SPACE and episode_noise is not None:
            weight_noise = episode_noise.perturbation(0).reshape(setup.dmp.weights.shape)
        base = BaseSetpoints(setup, obs.position, obs.orientation, weight_noise, online)

    if agent is not None:
        agent.begin_episode(rng)

    obs_vecs, units, pres, logps, values, rewards = [], [], [], [], [], []
    force_mags: List[float] = []
    pending = 0.0
    open_decision = False
    coupling_weights = None
    current = ResidualAction.zero()
    q_cmd = None
    active = mode == "pure"
    decision_idx = 0

    for k in range(cfg.max_steps):
        if k % K == 0:
            if open_decision:
                rewards.append(pending)
            pending = 0.0
            open_decision = False
            t = k * cfg.dt
            gate = residual_schedule(t, cfg.episode_length, setup.gate_fraction)
            active = True if mode == "pure" else gate == 1
            if active and agent is not None:
                current, unit, u, logp, value = agent.decide(obs, rng)
                if collect:
                    obs_vecs.append(normalized_obs_vector(obs))
                    units.append(unit)
                    pres.append(u)
                    logps.append(logp)
                    values.append(value)
                    open_decision = True
            else:
                current = ResidualAction.zero()
            if (
                locus is ExplorationLocus.COUPLING_TERM
                and episode_noise is not None
                and mode == "residual"
            ):
                coupling_weights = episode_noise.perturbation(decision_idx).reshape(
                    setup.dmp.weights.shape
                )
            if mode == "pure" or (mode == "hybrid" and active):
                q_cmd = (
                    apply_orientation_residual(obs.orientation, current.rotation())
                    if current.alpha != 0.0
                    else None
                )
            else:
                _, q_b = base.command(k, obs.position)
                q_cmd = (
                    apply_orientation_residual(q_b, current.rotation())
                    if current.alpha != 0.0
                    else q_b
                )
            decision_idx += 1

        if mode == "pure" or (mode == "hybrid" and active):
            v_cmd = current.d_translation
        else:
            if base.online and coupling_weights is not None:
                s = base.phase
                psi = basis_activations(s, setup.dmp.basis)
                base_coupling = s * (psi @ coupling_weights)
            else:
                base_coupling = None
            v_b, _ = base.command(k, env.position)
            v_cmd = v_b + current.d_translation
            if base.online:
                base.advance_online(base_coupling)

        res = env.step(v_cmd, q_cmd, need_obs=((k + 1) % K == 0))
        pending += res.reward
        force_mags.append(res.info["force"])
        if res.observation is not None:
            obs = res.observation
        if res.done:
            break

    if open_decision:
        rewards.append(pending)
    final_obs = env.observe()

    n = len(rewards)
    final_vec = normalized_obs_vector(final_obs)
    obs_dim = final_vec.size
    act_dim = agent.act_dim if agent is not None else 3
    target = cfg.insertion_target
    err = env.position - target
    return EpisodeRecord(
        observations=np.asarray(obs_vecs) if n else np.zeros((0, obs_dim)),
        actions=np.asarray(units) if n else np.zeros((0, act_dim)),
        rewards=np.asarray(rewards, dtype=float),
        log_probs=np.asarray(logps, dtype=float) if n else np.zeros(0),
        values=np.asarray(values, dtype=float) if n else np.zeros(0),
        pre_squash=np.asarray(pres) if n else np.zeros((0, act_dim)),
        final_observation=final_vec,
        terminal=env.success,
        success=env.success,
        force_mags=np.asarray(force_mags),
        env_dt=cfg.dt,
        insertion_time=env.elapsed if env.success else cfg.episode_length,
        broken=env.broken,
        final_l1=float(np.abs(err).sum()),
        final_l2=float(np.linalg.norm(err)),
        start_offset=start_position - cfg.start_center,
        start_angle=geodesic_angle(start_orientation, UnitQuaternion.identity()),
    )


@dataclass
class EvalStats:
    """Aggregate evaluation outcome over a batch of fresh start poses."""

    successes: np.ndarray
    insertion_times: np.ndarray
    peak_forces: np.ndarray
    mean_forces: np.ndarray
    broken: np.ndarray
    start_offsets: np.ndarray
    start_angles: np.ndarray

    @property
    def n(self) -> int:
        return int(self.successes.size)

    @property
    def success_rate(self) -> float:
        return float(self.successes.mean()) if self.n else 0.0

    @property
    def mean_insertion_time(self) -> float:
        return float(self.insertion_times.mean()) if self.n else 0.0

    @property
    def mean_peak_force(self) -> float:
        return float(self.peak_forces.mean()) if self.n else 0.0


def evaluate(
    setup: TaskSetup,
    agent: Optional[ResidualAgent],
    n_episodes: int,
    seed: int,
    mode: str = "residual",
    locus: ExplorationLocus = ExplorationLocus.TASK_SPACE,
    episodic_learner=None,
) -> EvalStats:
    """Roll fresh start poses with a frozen policy and aggregate outcomes."""
    env = ToyInsertionEnv(setup.config)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    succ, times, peaks, means, broken, offsets, angles = [], [], [], [], [], [], []
    for _ in range(n_episodes):
        noise = episodic_learner.start_episode(evaluate=True) if episodic_learner else None
        rec = run_episode(
            env, setup, agent, rng, mode=mode, locus=locus,
            episode_noise=noise, collect=False,
        )
        succ.append(rec.success)
        times.append(rec.insertion_time)
        peaks.append(rec.peak_force)
        means.append(rec.mean_force)
        broken.append(rec.broken)
        offsets.append(rec.start_offset)
        angles.append(rec.start_angle)
    return EvalStats(
        successes=np.asarray(succ, dtype=float),
        insertion_times=np.asarray(times),
        peak_forces=np.asarray(peaks),
        mean_forces=np.asarray(means),
        broken=np.asarray(broken, dtype=float),
        start_offsets=np.asarray(offsets),
        start_angles=np.asarray(angles),
    )
