"""Analytic quasi-static peg-in-hole environment.

The peg is abstracted to its tip position plus an orientation; the socket is
a plate at z = 0 (optionally tilted) with a hole at the origin whose axis
stays vertical.  Commanded twists are integrated for one step and projected
against the contact constraints:

* above the plate: free motion;
* pressing on the plate outside the hole mouth: descent blocked, normal
  force proportional to the attempted penetration, tangential sliding
  reduced by Coulomb-style friction (never reversed);
* within the mouth and aligned: descent allowed, lateral motion clamped to
  the clearance, wall contact adds lateral normal force plus friction
  opposing vertical motion;
* square/keyed cross-sections require yaw alignment within a tolerance
  derived from the clearance for depth to increase; the peg axis must stay
  within a cone that tightens as the peg engages deeper.

Forces are penalty-style (stiffness times attempted penetration per step),
inertia is ignored, and everything is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .policies import Observation
from .quaternions import (
    UnitQuaternion,
    quat_compose,
    quat_exp,
    quat_log,
    quat_to_matrix,
)
from .rl import DenseReward, EpisodeRecord, RewardSpec, SparseReward, dense_reward

CROSS_SECTIONS = ("round", "square", "keyed")

SUCCESS_TOLERANCE = 0.002  # remaining depth (m) that still counts as inserted
MIN_ENGAGEMENT = 0.005  # m; sets the axis-cone tolerance at the hole mouth
START_CLEARANCE = 0.002  # m; sampled starts are lifted to at least this height


@dataclass(frozen=True)
class SocketGeometry:
    """Parametric peg/socket pair; lengths in meters, angles in radians."""

    cross_section: str
    peg_half_width: float
    clearance: float
    depth: float
    tilt: float = 0.0
    friction: float = 0.3
    stiffness: float = 2e4
    break_force: Optional[float] = None

    def __post_init__(self):
        if self.cross_section not in CROSS_SECTIONS:
            raise ValueError(f"unknown cross-section {self.cross_section!r}")
        if self.clearance <= 0.0 or self.depth <= 0.0:
            raise ValueError("clearance and depth must be positive")
        if self.friction < 0.0:
            raise ValueError("friction must be non-negative")
        if not 0.0 <= self.tilt <= math.radians(5.0):
            raise ValueError("tilt must lie in [0, 5 degrees]")

    @property
    def yaw_tolerance(self) -> float:
        """Yaw misalignment (rad) that still lets a square/keyed peg engage."""
        return self.clearance / self.peg_half_width

    @property
    def yaw_symmetry(self) -> Optional[float]:
        if self.cross_section == "square":
            return math.pi / 2.0
        if self.cross_section == "keyed":
            return 2.0 * math.pi
        return None

    def axis_tolerance(self, engaged_depth: float) -> float:
        """Max peg-axis tilt from vertical; tightens as the peg goes deeper."""
        return self.clearance / max(engaged_depth, MIN_ENGAGEMENT)


@dataclass(frozen=True)
class EnvConfig:
    """Geometry plus episode, start-distribution, and controller settings."""

    geometry: SocketGeometry
    reward: RewardSpec
    start_center: np.ndarray
    start_radius: np.ndarray
    orientation_cone: float = 0.0
    latent_yaw_range: float = 0.0
    dt: float = 0.01
    episode_length: float = 10.0
    seed: int = 0
    speed_limit: float = 0.25
    angular_speed_limit: float = 1.5
    demo_hover_height: float = 0.025
    demo_duration: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "start_center", np.asarray(self.start_center, float))
        object.__setattr__(self, "start_radius", np.asarray(self.start_radius, float))
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.episode_length <= 0.0:
            raise ValueError("episode length must be positive")

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.dt))

    @property
    def insertion_target(self) -> np.ndarray:
        """Full-insertion tip position (hole bottom center)."""
        return np.array([0.0, 0.0, -self.geometry.depth])

    def with_radius(self, radius: float) -> "EnvConfig":
        return replace(self, start_radius=np.full(3, float(radius)))


@dataclass(frozen=True)
class EnvState:
    """Snapshot of the peg pose and contact situation."""

    position: np.ndarray
    orientation: UnitQuaternion
    velocity: np.ndarray
    angular_velocity: np.ndarray
    insertion_depth: float
    contact_force: np.ndarray
    elapsed: float


@dataclass
class StepResult:
    observation: Optional[Observation]
    reward: float
    done: bool
    info: dict


class ToyInsertionEnv:
    """Deterministic insertion MDP; one instance owns one episode at a time."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        g = config.geometry
        self._slope = math.tan(g.tilt)
        self._mu = g.friction
        self._k = g.stiffness
        self._reset_done = False

    # -- episode management -------------------------------------------------

    def reset(self, rng: Optional[np.random.Generator] = None) -> Observation:
        """Sample a start pose and latent socket yaw; returns the observation."""
        cfg = self.config
        rng = self.rng if rng is None else rng
        offset = rng.uniform(-cfg.start_radius, cfg.start_radius)
        p = cfg.start_center + offset
        floor = self._surface_height(p[0], p[1]) + START_CLEARANCE
        self._px, self._py = float(p[0]), float(p[1])
        self._pz = float(max(p[2], floor))

        if cfg.orientation_cone > 0.0:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0.0, cfg.orientation_cone)
            self._q = quat_exp(angle * axis)
        else:
            self._q = UnitQuaternion.identity()
        self._socket_yaw = (
            float(rng.uniform(-cfg.latent_yaw_range, cfg.latent_yaw_range))
            if cfg.latent_yaw_range > 0.0
            else 0.0
        )

        self._vel = np.zeros(3)
        self._ang_vel = np.zeros(3)
        self._force = np.zeros(3)
        self._penetration = 0.0
        self._t = 0.0
        self._steps = 0
        self._success = False
        self._broken = False
        self._peak_force = 0.0
        self._orientation_dirty = True
        self._reset_done = True
        return self._observation()

    # -- geometry helpers ---------------------------------------------------

    def _surface_height(self, x: float, y: float) -> float:
        return self._slope * x

    def _lateral_fit(self, x: float, y: float):
        """(fits, excess, unit outward direction) for the hole cross-section."""
        g = self.config.geometry
        c = g.clearance
        if g.cross_section == "round":
            r = math.sqrt(x * x + y * y)
            if r <= c:
                return True, 0.0, (0.0, 0.0)
            return False, r - c, (x / r, y / r)
        # square and keyed: axis-aligned box in the socket frame
        cy = math.cos(self._socket_yaw)
        sy = math.sin(self._socket_yaw)
        u = cy * x + sy * y
        v = -sy * x + cy * y
        du = abs(u) - c
        dv = abs(v) - c
        if du <= 0.0 and dv <= 0.0:
            return True, 0.0, (0.0, 0.0)
        eu = max(du, 0.0) * (1.0 if u > 0 else -1.0)
        ev = max(dv, 0.0) * (1.0 if v > 0 else -1.0)
        ex = cy * eu - sy * ev
        ey = sy * eu + cy * ev
        norm = math.sqrt(ex * ex + ey * ey)
        return False, norm, (ex / norm, ey / norm)

    def _update_alignment(self) -> None:
        if not self._orientation_dirty:
            return
        m = quat_to_matrix(self._q)
        az = m[:, 2]
        self._axis_tilt = math.acos(max(-1.0, min(1.0, float(az[2]))))
        ax = m[:, 0]
        yaw = math.atan2(float(ax[1]), float(ax[0])) - self._socket_yaw
        sym = self.config.geometry.yaw_symmetry
        if sym is None:
            self._yaw_error = 0.0
        else:
            self._yaw_error = abs((yaw + sym / 2.0) % sym - sym / 2.0)
        self._orientation_dirty = False

    def _aligned(self, engaged_depth: float) -> bool:
        g = self.config.geometry
        self._update_alignment()
        if self._axis_tilt > g.axis_tolerance(engaged_depth):
            return False
        if g.yaw_symmetry is not None and self._yaw_error > g.yaw_tolerance:
            return False
        return True

    # -- stepping -----------------------------------------------------------

    def step(
        self,
        v_cmd: np.ndarray,
        q_cmd: Optional[UnitQuaternion] = None,
        need_obs: bool = True,
    ) -> StepResult:
        """Apply a commanded twist for one control period."""
        if not self._reset_done:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        g = cfg.geometry
        dt = cfg.dt

        vx, vy, vz = float(v_cmd[0]), float(v_cmd[1]), float(v_cmd[2])
        if not (math.isfinite(vx) and math.isfinite(vy) and math.isfinite(vz)):
            raise ValueError("commanded velocity must be finite")
        speed = math.sqrt(vx * vx + vy * vy + vz * vz)
        if speed > cfg.speed_limit:
            scale = cfg.speed_limit / speed
            vx, vy, vz = vx * scale, vy * scale, vz * scale

        if q_cmd is not None and q_cmd is not self._q:
            delta = quat_log(quat_compose(q_cmd, self._q.conjugate()))
            angle = float(np.linalg.norm(delta))
            if angle <= 1e-12:
                # converged: adopt the command object so repeats short-circuit
                self._q = q_cmd
                self._ang_vel = np.zeros(3)
            else:
                limit = cfg.angular_speed_limit * dt
                if angle <= limit:
                    self._q = q_cmd
                    self._ang_vel = delta / dt
                else:
                    rot = delta * (limit / angle)
                    self._q = quat_compose(quat_exp(rot), self._q)
                    self._ang_vel = rot / dt
                self._orientation_dirty = True
        else:
            self._ang_vel = np.zeros(3)

        old_x, old_y, old_z = self._px, self._py, self._pz
        self._project_motion(vx * dt, vy * dt, vz * dt)

        self._vel[0] = (self._px - old_x) / dt
        self._vel[1] = (self._py - old_y) / dt
        self._vel[2] = (self._pz - old_z) / dt
        self._t += dt
        self._steps += 1

        fmag = math.sqrt(float(self._force @ self._force))
        if fmag > self._peak_force:
            self._peak_force = fmag
        if g.break_force is not None and fmag > g.break_force:
            self._broken = True

        depth = max(0.0, -self._pz)
        if not self._broken and depth >= g.depth - SUCCESS_TOLERANCE:
            self._success = True
        timeout = self._steps >= cfg.max_steps
        done = self._success or timeout

        reward = self._reward(done)
        obs = self._observation() if need_obs else None
        info = {
            "success": self._success,
            "broken": self._broken,
            "penetration": self._penetration,
            "force": fmag,
            "depth": depth,
            "time": self._t,
        }
        return StepResult(obs, reward, done, info)

    def _project_motion(self, dx: float, dy: float, dz: float) -> None:
        g = self.config.geometry
        mu, k = self._mu, self._k
        x_try, y_try, z_try = self._px + dx, self._py + dy, self._pz + dz

        fx = fy = fz = 0.0
        self._penetration = 0.0
        fits_now, _, _ = self._lateral_fit(self._px, self._py)

        if self._pz < 0.0 and fits_now:
            # engaged in the hole: walls clamp laterally and brake descent
            engaged = -self._pz
            fits, excess, outward = self._lateral_fit(x_try, y_try)
            wall_budget = 0.0
            if not fits:
                x_try -= excess * outward[0]
                y_try -= excess * outward[1]
                fx -= k * excess * outward[0]
                fy -= k * excess * outward[1]
                wall_budget = mu * excess
            if z_try < self._pz:
                if not self._aligned(engaged):
                    fz += k * (self._pz - z_try)
                    self._penetration = self._pz - z_try
                    z_try = self._pz
                elif wall_budget > 0.0:
                    braked = min(self._pz - z_try, wall_budget)
                    z_try += braked
                    fz += k * braked
            if z_try < -g.depth:
                fz += k * (-g.depth - z_try)
                self._penetration = max(self._penetration, -g.depth - z_try)
                z_try = -g.depth
        else:
            # on or above the plate (or pressed on the mouth lip)
            fits_try, _, _ = self._lateral_fit(x_try, y_try)
            can_enter = fits_try and self._aligned(max(0.0, -self._pz))
            if not can_enter:
                floor = 0.0 if fits_try else self._surface_height(x_try, y_try)
                if z_try < floor:
                    delta = floor - z_try
                    self._penetration = delta
                    fz += k * delta
                    z_try = floor
                    # Coulomb-style kinematic friction: tangential slide
                    # reduced by mu * penetration, never reversed
                    tx, ty = x_try - self._px, y_try - self._py
                    tnorm = math.sqrt(tx * tx + ty * ty)
                    if tnorm > 1e-15:
                        slide = max(0.0, tnorm - mu * delta)
                        drop = tnorm - slide
                        x_try = self._px + tx * (slide / tnorm)
                        y_try = self._py + ty * (slide / tnorm)
                        fx -= k * drop * (tx / tnorm)
                        fy -= k * drop * (ty / tnorm)

        self._px, self._py, self._pz = x_try, y_try, z_try
        self._force[0], self._force[1], self._force[2] = fx, fy, fz

    def _reward(self, done: bool) -> float:
        cfg = self.config
        target = cfg.insertion_target
        ex = self._px - target[0]
        ey = self._py - target[1]
        ez = self._pz - target[2]
        spec = cfg.reward
        if isinstance(spec, SparseReward):
            return 1.0 if (done and self._success) else 0.0
        l1 = abs(ex) + abs(ey) + abs(ez)
        l2 = math.sqrt(ex * ex + ey * ey + ez * ez)
        return dense_reward(l1, l2, spec)

    # -- views --------------------------------------------------------------

    def _observation(self) -> Observation:
        target = self.config.insertion_target
        pos = np.array([self._px, self._py, self._pz])
        phase = max(0.0, 1.0 - self._t / self.config.episode_length)
        return Observation(
            position=pos,
            velocity=self._vel.copy(),
            orientation=self._q,
            angular_velocity=self._ang_vel.copy(),
            contact_force=self._force.copy(),
            phase=phase,
            goal_offset=target - pos,
        )

    def observe(self) -> Observation:
        """Public snapshot of the current observation."""
        return self._observation()

    @property
    def position(self) -> np.ndarray:
        return np.array([self._px, self._py, self._pz])

    @property
    def state(self) -> EnvState:
        return EnvState(
            position=np.array([self._px, self._py, self._pz]),
            orientation=self._q,
            velocity=self._vel.copy(),
            angular_velocity=self._ang_vel.copy(),
            insertion_depth=max(0.0, -self._pz),
            contact_force=self._force.copy(),
            elapsed=self._t,
        )

    @property
    def success(self) -> bool:
        return self._success

    @property
    def broken(self) -> bool:
        return self._broken

    @property
    def elapsed(self) -> float:
        return self._t

    @property
    def peak_force(self) -> float:
        return self._peak_force


# -- episode metrics --------------------------------------------------------


def measure_forces(episode: EpisodeRecord) -> dict:
    """Peak, mean, and impulse of the contact-force magnitude trace."""
    mags = episode.force_mags
    if mags.size == 0:
        return {"peak": 0.0, "mean": 0.0, "impulse": 0.0}
    return {
        "peak": float(mags.max()),
        "mean": float(mags.mean()),
        "impulse": float(mags.sum() * episode.env_dt),
    }


def measure_insertion_time(episode: EpisodeRecord) -> float:
    """Time of first success, or the full episode length when unsuccessful."""
    return float(episode.insertion_time)


# -- task presets -------------------------------------------------------------

TASK_PRESETS = ("easy", "hard", "peg", "gear", "rj45")

RJ45_BREAK_FORCE = 14.0  # N; twice the jamming peak of a nominal gated run


def make_task(preset: str, seed: int = 0) -> EnvConfig:
    """Build one of the named task configurations."""
    if preset == "easy":
        return EnvConfig(
            geometry=SocketGeometry("round", 0.014, 2.5e-3, 0.03),
            reward=SparseReward(SUCCESS_TOLERANCE),
            start_center=np.array([-0.10, -0.08, 0.06]),
            start_radius=np.full(3, 0.12),
            seed=seed,
        )
    if preset == "hard":
        return EnvConfig(
            geometry=SocketGeometry("round", 0.014, 0.6e-3, 0.03),
            reward=SparseReward(SUCCESS_TOLERANCE),
            start_center=np.array([-0.10, -0.08, 0.06]),
            start_radius=np.full(3, 0.12),
            seed=seed,
        )
    if preset == "peg":
        return EnvConfig(
            geometry=SocketGeometry("round", 0.014, 0.4e-3, 0.03, tilt=math.radians(1.0)),
            reward=SparseReward(SUCCESS_TOLERANCE),
            start_center=np.array([-0.05, -0.04, 0.05]),
            start_radius=np.full(3, 0.03),
            seed=seed,
        )
    if preset == "gear":
        return EnvConfig(
            geometry=SocketGeometry(
                "square", 0.0115, 0.5e-3, 0.02, tilt=math.radians(1.0)
            ),
            reward=SparseReward(SUCCESS_TOLERANCE),
            start_center=np.array([-0.05, -0.04, 0.05]),
            start_radius=np.full(3, 0.01),
            orientation_cone=math.radians(40.0),
            latent_yaw_range=math.radians(4.0),
            seed=seed,
        )
    if preset == "rj45":
        return EnvConfig(
            geometry=SocketGeometry(
                "keyed", 0.0065, 0.35e-3, 0.015, tilt=math.radians(1.0),
                break_force=RJ45_BREAK_FORCE,
            ),
            reward=SparseReward(SUCCESS_TOLERANCE),
            start_center=np.array([-0.05, -0.04, 0.05]),
            start_radius=np.full(3, 0.01),
            orientation_cone=math.radians(40.0),
            latent_yaw_range=math.radians(5.0),
            seed=seed,
        )
    raise ValueError(f"unknown task preset {preset!r}")
