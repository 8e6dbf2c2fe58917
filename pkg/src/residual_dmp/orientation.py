"""Orientation DMP over unit quaternions.

The transformation system runs on the rotation-vector goal error
``e(q) = log(g o q*)`` with a scaled angular velocity ``eta = tau * omega``:

    tau * etadot = alpha_v * (beta_v * e(q) - eta) + s * f(s)
    q_next       = exp(dt * eta / tau) o q

Quaternions are renormalized every step; the forcing term is fit from a
demonstrated quaternion sequence exactly like the translational case, with
the goal error playing the role of position error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .dmp import (
    DEFAULT_ALPHA_S,
    DEFAULT_ALPHA_V,
    DEFAULT_RIDGE,
    BasisSet,
    CanonicalState,
    basis_activations,
    canonical_step,
)
from .quaternions import (
    AngleAxisResidual,
    UnitQuaternion,
    apply_orientation_residual,
    quat_compose,
    quat_exp,
    quat_log,
)


@dataclass(frozen=True)
class OrientationDmpParams:
    """Gains, goal orientation, and forcing weights over the 3D log-space error."""

    alpha_v: float
    beta_v: float
    tau: float
    g_q: UnitQuaternion
    weights: np.ndarray
    basis: BasisSet
    alpha_s: float = DEFAULT_ALPHA_S

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.basis.count, 3):
            raise ValueError(f"weights must be (n_basis, 3), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if not self.g_q.is_unit():
            raise ValueError("goal quaternion must be unit-norm")
        object.__setattr__(self, "weights", w)

    @staticmethod
    def unforced(
        g_q: UnitQuaternion,
        tau: float,
        n_basis: int = 10,
        alpha_v: float = DEFAULT_ALPHA_V,
        alpha_s: float = DEFAULT_ALPHA_S,
    ) -> "OrientationDmpParams":
        basis = BasisSet.log_spaced(n_basis, alpha_s)
        return OrientationDmpParams(
            alpha_v, alpha_v / 4.0, tau, g_q, np.zeros((n_basis, 3)), basis, alpha_s
        )


@dataclass(frozen=True)
class OrientationState:
    """Orientation set-point, scaled angular velocity, and canonical phase."""

    q: UnitQuaternion
    eta: np.ndarray
    s: CanonicalState

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        if not self.q.is_unit(1e-9):
            raise ValueError("orientation must be unit-norm")


def goal_error(params: OrientationDmpParams, q: UnitQuaternion) -> np.ndarray:
    """Rotation vector from the current orientation to the goal."""
    return quat_log(quat_compose(params.g_q, q.conjugate()))


def fit_orientation_dmp(
    demo_quats: Sequence[UnitQuaternion],
    dt: float,
    n_basis: int,
    alpha_v: float = DEFAULT_ALPHA_V,
    alpha_s: float = DEFAULT_ALPHA_S,
    ridge: float = DEFAULT_RIDGE,
) -> OrientationDmpParams:
    """Fit forcing weights from a demonstrated quaternion sequence."""
    if len(demo_quats) < 3:
        raise ValueError("need at least 3 demo samples")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    for i, q in enumerate(demo_quats):
        if not q.is_unit():
            raise ValueError(f"demo quaternion {i} is not unit-norm")

    n = len(demo_quats)
    tau = (n - 1) * dt
    beta_v = alpha_v / 4.0
    g_q = demo_quats[-1]
    basis = BasisSet.log_spaced(n_basis, alpha_s)

    omega = np.zeros((n, 3))
    for i in range(n):
        if i == 0:
            omega[i] = quat_log(quat_compose(demo_quats[1], demo_quats[0].conjugate())) / dt
        elif i == n - 1:
            omega[i] = quat_log(quat_compose(demo_quats[-1], demo_quats[-2].conjugate())) / dt
        else:
            omega[i] = quat_log(
                quat_compose(demo_quats[i + 1], demo_quats[i - 1].conjugate())
            ) / (2.0 * dt)
    eta = tau * omega
    etadot = np.gradient(eta, dt, axis=0)
    errors = np.stack([quat_log(quat_compose(g_q, q.conjugate())) for q in demo_quats])

    t = np.arange(n) * dt
    s_vals = np.exp(-alpha_s * t / tau)
    psi = np.exp(-basis.widths[None, :] * (s_vals[:, None] - basis.centers[None, :]) ** 2)
    features = s_vals[:, None] * psi / psi.sum(axis=1, keepdims=True)

    f_target = tau * etadot - alpha_v * (beta_v * errors - eta)
    gram = features.T @ features + ridge * np.eye(n_basis)
    weights = np.linalg.solve(gram, features.T @ f_target)
    return OrientationDmpParams(alpha_v, beta_v, tau, g_q, weights, basis, alpha_s)


def orientation_dmp_step(
    state: OrientationState,
    params: OrientationDmpParams,
    dt: float,
    residual: Optional[AngleAxisResidual] = None,
) -> OrientationState:
    """One explicit-Euler step; an optional residual steers the set-point."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    tau = params.tau
    psi = basis_activations(state.s.s, params.basis)
    f = state.s.s * (psi @ params.weights)
    e = goal_error(params, state.q)
    etadot = (params.alpha_v * (params.beta_v * e - state.eta) + f) / tau
    q_next = quat_compose(quat_exp(dt * state.eta / tau), state.q)
    if residual is not None and residual.alpha != 0.0:
        q_next = apply_orientation_residual(q_next, residual)
    return OrientationState(
        q=q_next,
        eta=state.eta + dt * etadot,
        s=canonical_step(state.s, dt),
    )


def orientation_rollout(
    params: OrientationDmpParams,
    start_q: Optional[UnitQuaternion] = None,
    duration: Optional[float] = None,
    dt: float = 0.01,
) -> List[UnitQuaternion]:
    """Integrate the orientation DMP and return the set-point sequence."""
    if duration is None:
        duration = params.tau
    q0 = params.g_q if start_q is None else start_q
    state = OrientationState(
        q=q0, eta=np.zeros(3), s=CanonicalState(1.0, params.alpha_s, params.tau)
    )
    n_steps = int(round(duration / dt))
    out = [state.q]
    for _ in range(n_steps):
        state = orientation_dmp_step(state, params, dt)
        out.append(state.q)
    return out
