"""Translational dynamic movement primitives.

A DMP is a critically damped spring-damper pulled toward a goal plus a
phase-gated radial-basis forcing term fit from one demonstration.  The phase
variable decays exponentially from 1 toward 0, so the forcing term vanishes
and the spring guarantees goal convergence.

Scaling convention: the state velocity ``v`` is the time-scaled velocity
``v = tau * xdot`` and the transformation system is

    tau * vdot = alpha_v * (beta_v * (g - x) - v) + s * f(s) + C
    tau * xdot = v

so the forcing target recovered from a demonstration is
``f = tau^2 * xddot - alpha_v * (beta_v * (g - x) - tau * xdot)``.

Residual injection sites supported by :func:`dmp_step`:

* ``weight_noise`` perturbs the forcing weights,
* ``coupling`` adds an extra force inside the transformation system,
* ``task_residual`` adds a velocity directly to the emitted motion, outside
  the phase-gated system.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_ALPHA_S = 4.6
DEFAULT_ALPHA_V = 25.0
DEFAULT_RIDGE = 1e-8
INTERNAL_DT = 1e-3


class FitError(RuntimeError):
    """Regression for the forcing weights failed; carries diagnostics."""

    def __init__(self, message: str, extent: float, condition: float):
        super().__init__(f"{message} (extent={extent:.3e}, cond={condition:.3e})")
        self.extent = extent
        self.condition = condition


@dataclass(frozen=True)
class CanonicalState:
    """Phase variable ``s`` in (0, 1] with its decay gain and time constant."""

    s: float = 1.0
    alpha_s: float = DEFAULT_ALPHA_S
    tau: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"phase must lie in (0, 1], got {self.s}")
        if self.tau <= 0.0 or self.alpha_s <= 0.0:
            raise ValueError("tau and alpha_s must be positive")


def canonical_step(state: CanonicalState, dt: float) -> CanonicalState:
    """Advance the phase by ``dt`` using the closed-form exponential decay."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = state.s * float(np.exp(-state.alpha_s * dt / state.tau))
    return replace(state, s=s)


@dataclass(frozen=True)
class BasisSet:
    """Gaussian basis over phase: centers in (0, 1], strictly decreasing."""

    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        h = np.asarray(self.widths, dtype=float)
        if c.size < 2:
            raise ValueError("need at least 2 basis functions")
        if c.size != h.size:
            raise ValueError("centers and widths must have equal length")
        if np.any(np.diff(c) >= 0.0):
            raise ValueError("centers must be strictly decreasing")
        if np.any(h <= 0.0):
            raise ValueError("widths must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", h)

    @property
    def count(self) -> int:
        return int(self.centers.size)

    @staticmethod
    def log_spaced(
        n: int, alpha_s: float = DEFAULT_ALPHA_S, overlap: float = 1.0
    ) -> "BasisSet":
        """Centers equi-spaced in time (log-spaced in phase), widths from gaps."""
        if n < 2:
            raise ValueError("need at least 2 basis functions")
        times = np.linspace(0.0, 1.0, n)
        centers = np.exp(-alpha_s * times)
        gaps = np.diff(centers)
        widths = np.empty(n)
        widths[:-1] = overlap / gaps**2
        widths[-1] = widths[-2]
        return BasisSet(centers, widths)


def basis_activations(s: float, basis: BasisSet) -> np.ndarray:
    """Normalized Gaussian activations at phase ``s`` (sums to one)."""
    if basis.centers.size == 0:
        raise ValueError("empty basis")
    if not 0.0 < s <= 1.0:
        raise ValueError(f"phase must lie in (0, 1], got {s}")
    psi = np.exp(-basis.widths * (s - basis.centers) ** 2)
    return psi / psi.sum()


@dataclass(frozen=True)
class DmpParams:
    """Transformation-system gains plus fitted forcing weights (N x D)."""

    alpha_v: float
    beta_v: float
    tau: float
    y0: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    basis: BasisSet
    alpha_s: float = DEFAULT_ALPHA_S

    def __post_init__(self):
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, float)))
        object.__setattr__(self, "g", np.atleast_1d(np.asarray(self.g, float)))
        w = np.asarray(self.weights, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        object.__setattr__(self, "weights", w)
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if w.shape[0] != self.basis.count:
            raise ValueError("weight rows must match basis count")

    @property
    def n_dims(self) -> int:
        return int(self.g.size)

    @staticmethod
    def unforced(
        y0,
        g,
        tau: float,
        n_basis: int = 10,
        alpha_v: float = DEFAULT_ALPHA_V,
        alpha_s: float = DEFAULT_ALPHA_S,
    ) -> "DmpParams":
        """Pure spring-damper parameters (zero forcing weights)."""
        y0 = np.atleast_1d(np.asarray(y0, float))
        basis = BasisSet.log_spaced(n_basis, alpha_s)
        weights = np.zeros((n_basis, y0.size))
        return DmpParams(alpha_v, alpha_v / 4.0, tau, y0, g, weights, basis, alpha_s)


@dataclass(frozen=True)
class DmpState:
    """Position, scaled velocity ``v = tau * xdot``, and canonical phase."""

    x: np.ndarray
    v: np.ndarray
    s: CanonicalState

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, float)))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("state entries must be finite")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled kinematic trace: one row per sample."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.size < 3:
            raise ValueError("trajectory needs at least 3 samples")
        steps = np.diff(t)
        if np.any(np.abs(steps - steps[0]) > 1e-9):
            raise ValueError("time samples must be uniformly spaced")
        for name in ("pos", "vel", "acc"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != t.size:
                raise ValueError(f"{name} rows must match time samples")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def n_dims(self) -> int:
        return int(self.pos.shape[1])

    def extent(self) -> float:
        """Largest per-dimension position range; the fit-quality yardstick."""
        return float(np.max(self.pos.max(axis=0) - self.pos.min(axis=0)))


def differentiate_demo(positions, dt: float) -> Trajectory:
    """Central-difference velocities/accelerations (one-sided at the ends)."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    if pos.shape[0] < 3:
        raise ValueError("need at least 3 samples to differentiate")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    vel = np.gradient(pos, dt, axis=0)
    acc = np.gradient(vel, dt, axis=0)
    t = np.arange(pos.shape[0]) * dt
    return Trajectory(t, pos, vel, acc)


def forcing_term(
    s: float, params: DmpParams, weight_noise: Optional[np.ndarray] = None
) -> np.ndarray:
    """Phase-gated forcing ``s * sum_i psi_i(s) w_id / sum_i psi_i(s)``."""
    psi = basis_activations(s, params.basis)
    w = params.weights
    if weight_noise is not None:
        w = w + weight_noise
    return s * (psi @ w)


def fit_from_demo(
    demo: Trajectory,
    n_basis: int,
    alpha_v: float = DEFAULT_ALPHA_V,
    alpha_s: float = DEFAULT_ALPHA_S,
    ridge: float = DEFAULT_RIDGE,
) -> DmpParams:
    """Fit forcing weights so the DMP reproduces one demonstration.

    Global ridge least-squares of the inverted transformation system onto
    the phase-gated basis features.  Raises :class:`FitError` for a
    degenerate (zero-extent) demonstration.
    """
    beta_v = alpha_v / 4.0
    tau = demo.duration
    y0 = demo.pos[0]
    g = demo.pos[-1]
    basis = BasisSet.log_spaced(n_basis, alpha_s)

    extent = demo.extent()
    s_vals = np.exp(-alpha_s * (demo.t - demo.t[0]) / tau)
    psi = np.exp(-basis.widths[None, :] * (s_vals[:, None] - basis.centers[None, :]) ** 2)
    features = s_vals[:, None] * psi / psi.sum(axis=1, keepdims=True)

    f_target = (
        tau**2 * demo.acc
        - alpha_v * (beta_v * (g[None, :] - demo.pos) - tau * demo.vel)
    )
    gram = features.T @ features + ridge * np.eye(n_basis)
    condition = float(np.linalg.cond(gram))
    if extent == 0.0:
        raise FitError("degenerate demonstration with zero spatial extent", extent, condition)
    weights = np.linalg.solve(gram, features.T @ f_target)
    return DmpParams(alpha_v, beta_v, tau, y0, g, weights, basis, alpha_s)


def dmp_step(
    state: DmpState,
    params: DmpParams,
    dt: float,
    coupling: Optional[np.ndarray] = None,
    weight_noise: Optional[np.ndarray] = None,
    task_residual: Optional[np.ndarray] = None,
) -> DmpState:
    """One explicit-Euler step with optional injections at the three sites."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    for inj in (coupling, weight_noise, task_residual):
        if inj is not None and not np.all(np.isfinite(inj)):
            raise ValueError("injections must be finite")
    f = forcing_term(state.s.s, params, weight_noise)
    if coupling is not None:
        f = f + coupling
    tau = params.tau
    xdot = state.v / tau
    if task_residual is not None:
        xdot = xdot + task_residual
    vdot = (params.alpha_v * (params.beta_v * (params.g - state.x) - state.v) + f) / tau
    return DmpState(
        x=state.x + dt * xdot,
        v=state.v + dt * vdot,
        s=canonical_step(state.s, dt),
    )


InjectionHook = Callable[[float, DmpState], tuple]


def rollout(
    params: DmpParams,
    start=None,
    goal=None,
    duration: Optional[float] = None,
    dt: float = 0.01,
    injection_hook: Optional[InjectionHook] = None,
    hook_every: int = 10,
    internal_dt: float = INTERNAL_DT,
) -> Trajectory:
    """Integrate the DMP and emit a uniformly sampled trajectory.

    The integrator substeps internally at ``internal_dt``; samples are
    emitted every ``dt``.  ``injection_hook(t, state)`` is polled every
    ``hook_every``-th emitted sample and must return a
    ``(weight_noise, coupling, task_residual)`` triple, which is held
    constant until the next poll (entries may be None).
    """
    if duration is None:
        duration = params.tau
    if duration <= 0.0 or dt <= 0.0:
        raise ValueError("duration and dt must be positive")
    if hook_every < 1:
        raise ValueError("hook_every must be >= 1")
    params = params if start is None else replace(params, y0=np.atleast_1d(np.asarray(start, float)))
    params = params if goal is None else replace(params, g=np.atleast_1d(np.asarray(goal, float)))

    n_steps = int(round(duration / dt))
    substeps = max(1, int(round(dt / internal_dt)))
    dt_sub = dt / substeps

    state = DmpState(
        x=params.y0.copy(),
        v=np.zeros(params.n_dims),
        s=CanonicalState(1.0, params.alpha_s, params.tau),
    )
    eta_w, c_t, eta_task = None, None, None
    zeros = np.zeros(params.n_dims)

    t = np.arange(n_steps + 1) * dt
    pos = np.empty((n_steps + 1, params.n_dims))
    vel = np.empty_like(pos)
    acc = np.empty_like(pos)

    def emitted_velocity(st: DmpState) -> np.ndarray:
        base = st.v / params.tau
        return base if eta_task is None else base + eta_task

    for k in range(n_steps + 1):
        if injection_hook is not None and k % hook_every == 0 and k < n_steps:
            eta_w, c_t, eta_task = injection_hook(float(t[k]), state)
        pos[k] = state.x
        vel[k] = emitted_velocity(state)
        f = forcing_term(state.s.s, params, eta_w) + (c_t if c_t is not None else zeros)
        acc[k] = (
            params.alpha_v * (params.beta_v * (params.g - state.x) - state.v) + f
        ) / params.tau**2
        if k < n_steps:
            for _ in range(substeps):
                state = dmp_step(state, params, dt_sub, c_t, eta_w, eta_task)
    return Trajectory(t, pos, vel, acc)
