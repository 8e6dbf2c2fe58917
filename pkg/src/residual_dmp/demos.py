"""Synthesized demonstrations: minimum-jerk reaches, spirals, insertions.

The insertion demonstration stands in for a teleoperated recording: a
minimum-jerk approach to a hover point above the hole followed by a slower
straight descent to full insertion, at constant orientation.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .dmp import Trajectory
from .env import EnvConfig
from .quaternions import UnitQuaternion


def min_jerk_profile(t: np.ndarray, duration: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized fifth-order point-to-point profile and its derivatives."""
    u = np.clip(t / duration, 0.0, 1.0)
    s = 10 * u**3 - 15 * u**4 + 6 * u**5
    sd = (30 * u**2 - 60 * u**3 + 30 * u**4) / duration
    sdd = (60 * u - 180 * u**2 + 120 * u**3) / duration**2
    return s, sd, sdd


def make_min_jerk_demo(start, goal, duration: float = 1.0, dt: float = 0.01) -> Trajectory:
    """Single minimum-jerk segment with analytic velocities and accelerations."""
    start = np.atleast_1d(np.asarray(start, float))
    goal = np.atleast_1d(np.asarray(goal, float))
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    s, sd, sdd = min_jerk_profile(t, duration)
    delta = goal - start
    pos = start[None, :] + s[:, None] * delta[None, :]
    vel = sd[:, None] * delta[None, :]
    acc = sdd[:, None] * delta[None, :]
    return Trajectory(t, pos, vel, acc)


def make_spiral_demo(
    inner_radius: float = 0.02,
    outer_radius: float = 0.10,
    turns: float = 2.5,
    duration: float = 5.0,
    dt: float = 0.01,
) -> Trajectory:
    """Planar Archimedean spiral with a minimum-jerk time parameterization."""
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    s, sd, sdd = min_jerk_profile(t, duration)
    phi_end = 2.0 * np.pi * turns
    phi = phi_end * s
    r = inner_radius + (outer_radius - inner_radius) * s

    dr = (outer_radius - inner_radius) * sd
    dphi = phi_end * sd
    ddr = (outer_radius - inner_radius) * sdd
    ddphi = phi_end * sdd

    cos_p, sin_p = np.cos(phi), np.sin(phi)
    pos = np.stack([r * cos_p, r * sin_p], axis=1)
    vel = np.stack(
        [dr * cos_p - r * sin_p * dphi, dr * sin_p + r * cos_p * dphi], axis=1
    )
    acc = np.stack(
        [
            ddr * cos_p - 2 * dr * sin_p * dphi - r * cos_p * dphi**2 - r * sin_p * ddphi,
            ddr * sin_p + 2 * dr * cos_p * dphi - r * sin_p * dphi**2 + r * cos_p * ddphi,
        ],
        axis=1,
    )
    return Trajectory(t, pos, vel, acc)


def make_insertion_demo(
    config: EnvConfig, dt: float = 0.01
) -> Tuple[Trajectory, List[UnitQuaternion]]:
    """Approach-then-descend demonstration matching a task configuration."""
    start = config.start_center
    hover = np.array([0.0, 0.0, config.demo_hover_height])
    bottom = np.array([0.0, 0.0, -config.geometry.depth + 1e-3])
    total = config.demo_duration
    t_approach = 0.64 * total
    t_descent = total - t_approach

    approach = make_min_jerk_demo(start, hover, t_approach, dt)
    descent = make_min_jerk_demo(hover, bottom, t_descent, dt)

    pos = np.vstack([approach.pos, descent.pos[1:]])
    vel = np.vstack([approach.vel, descent.vel[1:]])
    acc = np.vstack([approach.acc, descent.acc[1:]])
    t = np.arange(pos.shape[0]) * dt
    demo = Trajectory(t, pos, vel, acc)
    quats = [UnitQuaternion.identity()] * pos.shape[0]
    return demo, quats
