"""Residual correction layer: actions, exploration loci, and simple baselines.

A residual action is a bounded full-pose correction (translational velocity
delta plus an angle-axis rotation) composed onto the base DMP set-point.
Exploration or corrections can be routed to exactly one of three sites of
the DMP formulation: the forcing weights, a phase-modulated coupling force,
or task space (velocity added outside the phase-gated system).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .quaternions import (
    AngleAxisResidual,
    UnitQuaternion,
    apply_orientation_residual,
)

DEFAULT_TRANSLATION_BOUND = 5e-3  # m/s per axis at the residual decision rate
DEFAULT_ROTATION_BOUND = 0.1  # rad per decision

RLS_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class ActionBounds:
    """Per-axis translational velocity bound and rotation angle bound."""

    translation: float = DEFAULT_TRANSLATION_BOUND
    rotation: float = DEFAULT_ROTATION_BOUND

    def as_vector(self, with_rotation: bool = True) -> np.ndarray:
        t = np.full(3, self.translation)
        if not with_rotation:
            return t
        return np.concatenate([t, np.full(3, self.rotation)])


@dataclass(frozen=True)
class Observation:
    """Proprioceptive state fed to residual policies."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: UnitQuaternion
    angular_velocity: np.ndarray
    contact_force: np.ndarray
    phase: float
    goal_offset: np.ndarray

    def as_vector(self) -> np.ndarray:
        vec = np.concatenate(
            [
                self.position,
                self.velocity,
                self.orientation.as_array(),
                self.angular_velocity,
                self.contact_force,
                [self.phase],
                self.goal_offset,
            ]
        )
        if not np.all(np.isfinite(vec)):
            raise ValueError("observation contains non-finite entries")
        return vec


OBSERVATION_DIM = 20


@dataclass(frozen=True)
class ResidualAction:
    """Bounded full-pose correction: velocity delta plus angle-axis rotation."""

    d_translation: np.ndarray
    alpha: float = 0.0
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    @staticmethod
    def zero() -> "ResidualAction":
        return ResidualAction(np.zeros(3))

    def rotation(self) -> AngleAxisResidual:
        return AngleAxisResidual(self.alpha, self.axis)

    def scaled(self, gate: float) -> "ResidualAction":
        return ResidualAction(gate * self.d_translation, gate * self.alpha, self.axis)

    def within(self, bounds: ActionBounds, tol: float = 1e-12) -> bool:
        return bool(
            np.all(np.abs(self.d_translation) <= bounds.translation + tol)
            and abs(self.alpha) <= bounds.rotation + tol
        )


class ExplorationLocus(enum.Enum):
    """Which part of the DMP formulation receives the correction signal."""

    PARAMETER_SPACE = "parameter-space"
    COUPLING_TERM = "coupling-term"
    TASK_SPACE = "task-space"
    NONE = "none"

    @staticmethod
    def from_string(name: str) -> "ExplorationLocus":
        for locus in ExplorationLocus:
            if locus.value == name:
                return locus
        raise ValueError(f"unknown exploration locus: {name!r}")


def compose_full_pose(
    base_velocity: np.ndarray,
    base_orientation: UnitQuaternion,
    residual: ResidualAction,
) -> Tuple[np.ndarray, UnitQuaternion]:
    """Final twist: translation added, orientation composed via the residual."""
    velocity = np.asarray(base_velocity, dtype=float) + residual.d_translation
    orientation = apply_orientation_residual(base_orientation, residual.rotation())
    return velocity, orientation


def random_policy(rng: np.random.Generator, bounds: ActionBounds) -> ResidualAction:
    """Uniform full-pose noise: the jiggling baseline."""
    d = rng.uniform(-bounds.translation, bounds.translation, size=3)
    alpha = float(rng.uniform(-bounds.rotation, bounds.rotation))
    axis = rng.normal(size=3)
    norm = float(np.linalg.norm(axis))
    while norm < 1e-12:
        axis = rng.normal(size=3)
        norm = float(np.linalg.norm(axis))
    return ResidualAction(d, alpha, axis / norm)


def inject_exploration(
    locus: ExplorationLocus,
    eta,
    phase: Optional[float] = None,
) -> Tuple[Optional[np.ndarray], Optional[np.ndarray], Optional[np.ndarray]]:
    """Route a signal to exactly one injection site of the DMP step.

    Returns the ``(weight_noise, coupling, task_residual)`` triple.  The
    coupling site modulates the signal by the current phase so it decays,
    like the forcing term, toward the end of the movement.
    """
    eta = None if eta is None else np.asarray(eta, dtype=float)
    if locus is ExplorationLocus.NONE:
        if eta is not None and np.any(eta != 0.0):
            raise ValueError("locus 'none' cannot carry a nonzero signal")
        return None, None, None
    if eta is None:
        return None, None, None
    if locus is ExplorationLocus.PARAMETER_SPACE:
        return eta, None, None
    if locus is ExplorationLocus.COUPLING_TERM:
        if phase is None:
            raise ValueError("coupling-term injection needs the current phase")
        return None, phase * eta, None
    if locus is ExplorationLocus.TASK_SPACE:
        return None, None, eta
    raise ValueError(f"unhandled locus {locus}")


def residual_schedule(t: float, episode_length: float, activation_fraction: float) -> int:
    """Hard gate: 0 before the activation time, 1 from it onward."""
    if not 0.0 <= activation_fraction <= 1.0:
        raise ValueError("activation fraction must lie in [0, 1]")
    # tolerance keeps the boundary sample active despite rounding in f * T
    return 1 if t >= activation_fraction * episode_length - 1e-9 else 0


@dataclass(frozen=True)
class LinearPolicyState:
    """Recursive-least-squares linear map from observation features to actions.

    The covariance is shared across output rows; ``forgetting`` is the RLS
    forgetting factor (1.0 keeps all history).
    """

    weights: np.ndarray
    covariance: np.ndarray
    forgetting: float = 1.0
    resets: int = 0

    @staticmethod
    def initial(
        n_outputs: int = 3,
        n_features: int = OBSERVATION_DIM + 1,
        forgetting: float = 1.0,
        prior_scale: float = 1e2,
    ) -> "LinearPolicyState":
        return LinearPolicyState(
            weights=np.zeros((n_outputs, n_features)),
            covariance=prior_scale * np.eye(n_features),
            forgetting=forgetting,
        )


def _features(obs: Observation) -> np.ndarray:
    return np.concatenate([obs.as_vector(), [1.0]])


def linear_policy_act(
    state: LinearPolicyState, obs: Observation, bounds: ActionBounds
) -> ResidualAction:
    """Clamped linear read-out; translation only (alpha stays zero)."""
    raw = state.weights @ _features(obs)
    return ResidualAction(np.clip(raw, -bounds.translation, bounds.translation))


def linear_policy_update(
    state: LinearPolicyState, obs: Observation, target: np.ndarray
) -> LinearPolicyState:
    """One RLS step toward ``target``; resets the covariance if it degrades."""
    phi = _features(obs)
    target = np.asarray(target, dtype=float)
    lam = state.forgetting
    p_phi = state.covariance @ phi
    gain = p_phi / (lam + float(phi @ p_phi))
    error = target - state.weights @ phi
    weights = state.weights + np.outer(error, gain)
    cov = (state.covariance - np.outer(gain, p_phi)) / lam
    cov = 0.5 * (cov + cov.T)
    resets = state.resets
    if float(np.linalg.cond(cov)) > RLS_CONDITION_LIMIT:
        cov = np.eye(cov.shape[0]) * 1e2
        resets += 1
    return replace(state, weights=weights, covariance=cov, resets=resets)


def quintic_segment(
    p0: np.ndarray,
    v0: np.ndarray,
    a0: np.ndarray,
    p1: np.ndarray,
    v1: np.ndarray,
    a1: np.ndarray,
    horizon: float,
    n_eval: int,
) -> np.ndarray:
    """Sample a fifth-order polynomial matching position/velocity/acceleration
    at both ends, at ``n_eval`` points from t=0 (inclusive) to t=horizon
    (exclusive)."""
    T = horizon
    c0, c1, c2 = p0, v0, 0.5 * a0
    d = p1 - c0 - c1 * T - c2 * T**2
    dv = v1 - c1 - 2 * c2 * T
    da = a1 - 2 * c2
    c3 = (10 * d - 4 * dv * T + 0.5 * da * T**2) / T**3
    c4 = (-15 * d + 7 * dv * T - da * T**2) / T**4
    c5 = (6 * d - 3 * dv * T + 0.5 * da * T**2) / T**5
    ts = (np.arange(n_eval) / n_eval) * T
    out = np.empty((n_eval,) + np.shape(p0))
    for j, t in enumerate(ts):
        out[j] = c0 + c1 * t + c2 * t**2 + c3 * t**3 + c4 * t**4 + c5 * t**5
    return out


def hold_and_interpolate(
    positions: np.ndarray,
    velocities: np.ndarray,
    accelerations: np.ndarray,
    residuals: np.ndarray,
    rate_ratio: int,
    dt_coarse: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Upsample coarse set-points by a quintic; repeat residuals (zero-order hold).

    Returns ``(fine_positions, fine_residuals)`` with
    ``(n_knots - 1) * rate_ratio + 1`` rows.
    """
    if rate_ratio < 1:
        raise ValueError("rate ratio must be >= 1")
    pos = np.atleast_2d(np.asarray(positions, float))
    vel = np.atleast_2d(np.asarray(velocities, float))
    acc = np.atleast_2d(np.asarray(accelerations, float))
    res = np.atleast_2d(np.asarray(residuals, float))
    n = pos.shape[0]
    if n < 2:
        raise ValueError("need at least two set-points")
    if rate_ratio == 1:
        return pos.copy(), res.copy()
    fine_pos = np.empty(((n - 1) * rate_ratio + 1, pos.shape[1]))
    fine_res = np.empty(((n - 1) * rate_ratio + 1, res.shape[1]))
    for k in range(n - 1):
        seg = quintic_segment(
            pos[k], vel[k], acc[k], pos[k + 1], vel[k + 1], acc[k + 1],
            dt_coarse, rate_ratio,
        )
        fine_pos[k * rate_ratio : (k + 1) * rate_ratio] = seg
        fine_res[k * rate_ratio : (k + 1) * rate_ratio] = res[k]
    fine_pos[-1] = pos[-1]
    fine_res[-1] = res[-1]
    return fine_pos, fine_res
