"""Gripper, arm and grasp-candidate types.

The arm is a "virtual joint" abstraction: a configuration is the end-effector
pose written as (x, y, z, roll, pitch, yaw) and configuration-space distance
is a weighted Euclidean norm (1.0 per meter, 0.2 per radian by default).
Reachability is a ball of radius ``reach_radius`` around the arm base.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Pose, rotation_to_rpy


@dataclass(frozen=True)
class GripperModel:
    """Two-finger parallel gripper (defaults match a Robotiq 2F-85)."""

    width_min: float = 0.0
    width_max: float = 0.085
    finger_length: float = 0.037
    finger_thickness: float = 0.01
    hand_depth: float = 0.06
    finger_height: float = 0.02

    def __post_init__(self):
        if not (0.0 <= self.width_min < self.width_max):
            raise ValueError("need 0 <= width_min < width_max")
        if self.finger_length <= 0.0:
            raise ValueError("finger_length must be positive")


ArmConfig = np.ndarray  # 6-vector (x, y, z, roll, pitch, yaw)


@dataclass(frozen=True)
class ArmModel:
    base_pose: Pose = field(
        default_factory=lambda: Pose(np.eye(3), np.array([0.0, 0.35, 0.75]))
    )
    reach_radius: float = 0.9
    config_weights: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 1.0, 1.0, 0.2, 0.2, 0.2])
    )
    max_joint_distance: float = 2.0
    home: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.45, 0.95, 0.0, 0.0, 0.0])
    )

    def __post_init__(self):
        if self.reach_radius <= 0.0:
            raise ValueError("reach_radius must be positive")
        if self.max_joint_distance <= 0.0:
            raise ValueError("max_joint_distance must be positive")
        w = np.asarray(self.config_weights, dtype=float).reshape(6)
        if (w <= 0.0).any():
            raise ValueError("config weights must be positive")
        object.__setattr__(self, "config_weights", w)
        object.__setattr__(self, "home", np.asarray(self.home, dtype=float).reshape(6))

    def joint_distance(self, a: ArmConfig, b: ArmConfig) -> float:
        """Weighted norm; angular components compared on the circle."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        d[3:] = (d[3:] + np.pi) % (2.0 * np.pi) - np.pi
        return float(np.linalg.norm(self.config_weights * d))

    def reachable(self, position: np.ndarray) -> bool:
        return (
            float(np.linalg.norm(np.asarray(position) - self.base_pose.translation))
            <= self.reach_radius
        )

    def config_for_pose(self, pose: Pose) -> ArmConfig:
        rpy = rotation_to_rpy(pose.rotation)
        return np.concatenate([pose.translation, rpy])


@dataclass(frozen=True)
class ScoreBreakdown:
    width: float
    joint: float
    approach: float
    segment: float
    laser: float

    @property
    def total(self) -> float:
        return self.width * self.joint * self.approach * self.segment * self.laser


@dataclass(frozen=True)
class GraspCandidate:
    """6-DOF hand pose with approach/closing axes and width annotations.

    ``base_point`` is the midpoint of the finger-closing segment at the
    fingertip plane; the hand pose translation coincides with it.
    """

    pose: Pose
    approach: np.ndarray
    axis: np.ndarray
    width: float
    base_point: np.ndarray
    candidate_id: int = -1
    joint_config: Optional[ArmConfig] = None
    scores: Optional[ScoreBreakdown] = None

    def __post_init__(self):
        a = np.asarray(self.approach, dtype=float).reshape(3)
        x = np.asarray(self.axis, dtype=float).reshape(3)
        object.__setattr__(self, "approach", a)
        object.__setattr__(self, "axis", x)
        object.__setattr__(
            self, "base_point", np.asarray(self.base_point, dtype=float).reshape(3)
        )
        if abs(np.linalg.norm(a) - 1.0) > 1e-6 or abs(np.linalg.norm(x) - 1.0) > 1e-6:
            raise ValueError("approach and axis must be unit vectors")
        if abs(float(a @ x)) > 1e-6:
            raise ValueError("approach must be perpendicular to axis")

    @property
    def binormal(self) -> np.ndarray:
        return np.cross(self.approach, self.axis)

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation

    @property
    def score(self) -> float:
        return self.scores.total if self.scores is not None else float("nan")

    def with_joint_config(self, config: ArmConfig) -> "GraspCandidate":
        return replace(self, joint_config=config)

    def with_scores(self, scores: ScoreBreakdown) -> "GraspCandidate":
        return replace(self, scores=scores)


def hand_rotation(axis: np.ndarray, approach: np.ndarray) -> np.ndarray:
    """Hand frame columns: closing axis, binormal, approach."""
    axis = np.asarray(axis, dtype=float)
    approach = np.asarray(approach, dtype=float)
    binormal = np.cross(approach, axis)
    return np.column_stack([axis, binormal, approach])


def hand_boxes(
    candidate_pose: Pose, gripper: GripperModel, opening: float
) -> list[tuple[np.ndarray, np.ndarray]]:
    """(center, half-extents) of the two finger boxes and palm, world frame.

    Box axes follow the hand rotation (closing, binormal, approach); the pose
    translation is the fingertip-plane midpoint.
    """
    rot = candidate_pose.rotation
    tip = candidate_pose.translation
    ax = rot[:, 0]
    ap = rot[:, 2]
    g = gripper
    l = g.finger_length
    finger_half = np.array([g.finger_thickness / 2, g.finger_height / 2, l / 2])
    palm_half = np.array(
        [(opening + 2 * g.finger_thickness) / 2, g.finger_height / 2, g.hand_depth / 2]
    )
    mid = tip - (l / 2) * ap
    offset = (opening + g.finger_thickness) / 2
    return [
        (mid + offset * ax, finger_half),
        (mid - offset * ax, finger_half),
        (tip - (l + g.hand_depth / 2) * ap, palm_half),
    ]


def closing_region(
    candidate_pose: Pose, gripper: GripperModel, opening: float
) -> tuple[np.ndarray, np.ndarray]:
    """(center, half-extents) of the volume swept by closing fingers."""
    rot = candidate_pose.rotation
    tip = candidate_pose.translation
    l = gripper.finger_length
    center = tip - (l / 2) * rot[:, 2]
    half = np.array([opening / 2, gripper.finger_height / 2, l / 2])
    return center, half
