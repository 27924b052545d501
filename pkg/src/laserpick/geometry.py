"""Rigid poses and small rotation helpers.

World frame convention: x right, y forward, z up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


def normalized(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def any_perpendicular(v: np.ndarray) -> np.ndarray:
    """Some unit vector perpendicular to v (deterministic choice)."""
    v = normalized(v)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(v @ ref) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    return normalized(np.cross(v, ref))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_world = rotation @ p_local + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant must be 1")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise ValueError("rotation must be orthonormal")

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -(rt @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """self then other in world terms: result = self ∘ other."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def is_identity(self) -> bool:
        return np.array_equal(self.rotation, np.eye(3)) and np.array_equal(
            self.translation, np.zeros(3)
        )


def pose_rpy(x=0.0, y=0.0, z=0.0, roll=0.0, pitch=0.0, yaw=0.0) -> Pose:
    """Pose from intrinsic xyz translation and extrinsic roll/pitch/yaw."""
    return Pose(rot_z(yaw) @ rot_y(pitch) @ rot_x(roll), np.array([x, y, z]))


def rotation_to_rpy(rotation: np.ndarray) -> np.ndarray:
    """Extrinsic x-y-z Euler angles (inverse of pose_rpy's convention)."""
    from scipy.spatial.transform import Rotation

    return Rotation.from_matrix(rotation).as_euler("xyz")


def rpy_to_rotation(rpy: np.ndarray) -> np.ndarray:
    from scipy.spatial.transform import Rotation

    return Rotation.from_euler("xyz", rpy).as_matrix()


def slerp_rotations(r0: np.ndarray, r1: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """Spherical interpolation between two rotation matrices."""
    from scipy.spatial.transform import Rotation, Slerp

    key = Rotation.from_matrix(np.stack([r0, r1]))
    sl = Slerp([0.0, 1.0], key)
    return sl(np.clip(fractions, 0.0, 1.0)).as_matrix()
