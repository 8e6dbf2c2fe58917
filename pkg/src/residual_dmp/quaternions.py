"""Unit-quaternion algebra for orientation set-points and residual corrections.

Convention (fixed and tested):

* scalar-first storage ``[w, x, y, z]``;
* composition ``quat_compose(a, b)`` is the Shuster (JPL) product, i.e. the
  Hamilton product with the sign of the vector cross term flipped;
* ``quat_to_matrix`` returns the matrix ``R`` satisfying the homomorphism
  ``R(a o b) = R(a) @ R(b)`` under this product, and ``rotate_vector(q, v)``
  applies that matrix;
* quaternions are kept on the ``w >= 0`` hemisphere after every composition
  so the log map stays single-valued;
* ``quat_log`` returns the full rotation vector (its norm is the rotation
  angle), ``quat_exp`` is its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-6
AXIS_DEGENERACY_FLOOR = 1e-8


class DegenerateAxisError(ValueError):
    """Angle-axis residual with a meaningful angle but a vanishing axis."""


@dataclass(frozen=True)
class UnitQuaternion:
    """Normalised quaternion with real part ``w`` and imaginary part ``xyz``."""

    w: float
    xyz: np.ndarray

    @staticmethod
    def identity() -> "UnitQuaternion":
        return UnitQuaternion(1.0, np.zeros(3))

    @staticmethod
    def from_wxyz(values) -> "UnitQuaternion":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (4,):
            raise ValueError(f"expected 4 components, got shape {arr.shape}")
        return UnitQuaternion(float(arr[0]), arr[1:].copy()).normalized()

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.w], self.xyz))

    def norm(self) -> float:
        return float(np.sqrt(self.w * self.w + float(self.xyz @ self.xyz)))

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.xyz)

    def normalized(self) -> "UnitQuaternion":
        """Rescale to unit norm and canonicalize onto the w >= 0 hemisphere."""
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero quaternion")
        sign = -1.0 if self.w < 0.0 else 1.0
        return UnitQuaternion(sign * self.w / n, sign * self.xyz / n)


def _require_unit(q: UnitQuaternion, name: str) -> None:
    if not q.is_unit():
        raise ValueError(f"{name} is not unit-norm: |q| = {q.norm():.9f}")


def quat_compose(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Shuster-product composition ``a o b``.

    The result is renormalized and hemisphere-canonicalized.  Under this
    product the matrix map is a homomorphism: ``R(a o b) = R(a) R(b)``.
    """
    _require_unit(a, "a")
    _require_unit(b, "b")
    w = a.w * b.w - float(a.xyz @ b.xyz)
    xyz = a.w * b.xyz + b.w * a.xyz - np.cross(a.xyz, b.xyz)
    return UnitQuaternion(w, xyz).normalized()


def quat_log(q: UnitQuaternion) -> np.ndarray:
    """Full rotation vector of ``q``: ``2 arccos(w) * xyz / ||xyz||``.

    The identity maps to the zero vector; the degenerate ``||xyz|| -> 0``
    limit returns zeros as well.
    """
    _require_unit(q, "q")
    vn = float(np.linalg.norm(q.xyz))
    if vn < 1e-12:
        return np.zeros(3)
    angle = 2.0 * np.arccos(np.clip(q.w, -1.0, 1.0))
    return angle * q.xyz / vn


def quat_exp(v) -> UnitQuaternion:
    """Inverse of :func:`quat_log`: rotation vector ``v`` to a unit quaternion."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("rotation vector must be finite")
    angle = float(np.linalg.norm(v))
    if angle < 1e-12:
        return UnitQuaternion.identity()
    half = 0.5 * angle
    return UnitQuaternion(np.cos(half), np.sin(half) * v / angle).normalized()


@dataclass(frozen=True)
class AngleAxisResidual:
    """Residual rotation of ``alpha`` radians about (unnormalized) axis ``r``."""

    alpha: float
    r: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    @staticmethod
    def zero() -> "AngleAxisResidual":
        return AngleAxisResidual(0.0, np.array([0.0, 0.0, 1.0]))


def angle_axis_to_quat(res: AngleAxisResidual) -> UnitQuaternion:
    """Build the correction quaternion ``[cos(a/2), sin(a/2) r/||r||]``.

    Requires ``alpha`` in ``[-pi, pi]`` so the real part is non-negative.
    """
    alpha = float(res.alpha)
    if not -np.pi <= alpha <= np.pi:
        raise ValueError(f"alpha must lie in [-pi, pi], got {alpha}")
    if alpha == 0.0:
        return UnitQuaternion.identity()
    r = np.asarray(res.r, dtype=float)
    rn = float(np.linalg.norm(r))
    if rn < AXIS_DEGENERACY_FLOOR:
        raise DegenerateAxisError(
            f"axis norm {rn:.3e} below degeneracy floor with alpha={alpha:.3e}"
        )
    half = 0.5 * alpha
    return UnitQuaternion(np.cos(half), np.sin(half) * r / rn).normalized()


def apply_orientation_residual(
    q_b: UnitQuaternion, res: AngleAxisResidual
) -> UnitQuaternion:
    """Compose a residual correction onto a base orientation set-point."""
    if res.alpha == 0.0:
        return q_b
    return quat_compose(angle_axis_to_quat(res), q_b)


def quat_error_to_angular_velocity(
    q_target: UnitQuaternion, q_current: UnitQuaternion, dt: float
) -> np.ndarray:
    """Angular velocity that carries ``q_current`` onto ``q_target`` in ``dt``."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return quat_log(quat_compose(q_target, q_current.conjugate())) / dt


def quat_to_matrix(q: UnitQuaternion) -> np.ndarray:
    """3x3 matrix ``R(q)`` with ``R(a o b) = R(a) R(b)`` for this product."""
    _require_unit(q, "q")
    w = q.w
    x, y, z = q.xyz
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)],
            [2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)],
            [2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> UnitQuaternion:
    """Inverse of :func:`quat_to_matrix` (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
    tr = float(np.trace(m))
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (m[1, 2] - m[2, 1]) / s
        y = (m[2, 0] - m[0, 2]) / s
        z = (m[0, 1] - m[1, 0]) / s
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[1, 2] - m[2, 1]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 0] - m[0, 2]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2]) * 2.0
        w = (m[0, 1] - m[1, 0]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return UnitQuaternion(w, np.array([x, y, z])).normalized()


def rotate_vector(q: UnitQuaternion, v) -> np.ndarray:
    """Apply ``R(q)`` to a 3-vector."""
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def geodesic_angle(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Rotation angle (radians) separating two orientations."""
    return float(np.linalg.norm(quat_log(quat_compose(a, b.conjugate()))))


def slerp(a: UnitQuaternion, b: UnitQuaternion, fraction: float) -> UnitQuaternion:
    """Geodesic interpolation from ``a`` (fraction 0) to ``b`` (fraction 1)."""
    delta = quat_log(quat_compose(b, a.conjugate()))
    return quat_compose(quat_exp(fraction * delta), a)
