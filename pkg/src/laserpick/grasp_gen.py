"""Geometric 6-DOF grasp candidate generation.

Seeds come from the segmented cloud (approach = inverted surface normal,
closing axis rolled about the approach); candidates must pass a
friction-cone antipodal test and a full-cloud hand collision check, so
grasps are only found near the segmented object while the whole environment
vetoes colliding hands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .geometry import Pose, any_perpendicular, rotation_about_axis
from .preprocess import SegmentedCloud
from .robot import GraspCandidate, GripperModel, closing_region, hand_boxes, hand_rotation
from .spatial import SpatialIndex

FRICTION_HALF_ANGLE = np.deg2rad(26.57)  # mu = 0.5
CONTACT_BAND = 0.006
COLLISION_CLEARANCE = 0.01
INSERTION_FRACTIONS = (0.6, 0.3)


@dataclass(frozen=True)
class _HandFrame:
    rotation: np.ndarray
    tip: np.ndarray

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, self.tip)


def _enclosed_mask(points: np.ndarray, pose: Pose, gripper: GripperModel, opening: float) -> np.ndarray:
    center, half = closing_region(pose, gripper, opening)
    return _kernels.obb_mask(points, pose.rotation, center, half)


def antipodal_check(
    pose: Pose,
    points: np.ndarray,
    normals: np.ndarray,
    gripper: GripperModel,
    friction_half_angle: float = FRICTION_HALF_ANGLE,
    contact_band: float = CONTACT_BAND,
) -> tuple[bool, float]:
    """Friction-cone antipodal test inside the closing region.

    Returns (accepted, width); width is the extent of the enclosed points
    along the closing axis.  Accepts only if both extreme bands contain a
    point whose normal lies within the friction cone of the corresponding
    closing direction.
    """
    mask = _enclosed_mask(points, pose, gripper, gripper.width_max)
    if not mask.any():
        return False, 0.0
    axis = pose.rotation[:, 0]
    proj = points[mask] @ axis
    nrm = normals[mask]
    lo, hi = float(proj.min()), float(proj.max())
    width = hi - lo
    cos_th = np.cos(friction_half_angle)
    low_band = proj <= lo + contact_band
    high_band = proj >= hi - contact_band
    # low-side surface normals should oppose +axis, high-side oppose -axis
    ok_low = bool((nrm[low_band] @ -axis >= cos_th).any())
    ok_high = bool((nrm[high_band] @ axis >= cos_th).any())
    return ok_low and ok_high, width


def hand_collision_free(
    pose: Pose,
    width: float,
    full_points: np.ndarray,
    gripper: GripperModel,
    clearance: float = COLLISION_CLEARANCE,
) -> bool:
    """No full-cloud point inside the finger or palm boxes at opening width+clearance."""
    opening = width + clearance
    for center, half in hand_boxes(pose, gripper, opening):
        if _kernels.obb_contains_any(full_points, pose.rotation, center, half):
            return False
    return True


def sample_candidates(
    seg: SegmentedCloud,
    full: PointCloud,
    gripper: GripperModel,
    n_seeds: int = 60,
    n_rolls: int = 8,
    seed: int = 0,
    full_index: SpatialIndex | None = None,
) -> list[GraspCandidate]:
    """Antipodal, collision-free candidates seeded from the segmented cloud.

    ``full`` must carry normals (used by the antipodal test); collision uses
    its raw points.  Deterministic for a given seed.
    """
    seg_cloud = seg.cloud
    if len(seg_cloud) == 0:
        return []
    if seg_cloud.normals is None or full.normals is None:
        raise ValueError("segmented and full clouds must carry normals")
    rng = np.random.default_rng(seed)
    n = len(seg_cloud)
    chosen = rng.choice(n, size=min(n_seeds, n), replace=False)
    if full_index is None:
        full_index = SpatialIndex(full)
    g = gripper
    roi_r = (
        np.linalg.norm(
            [g.width_max / 2 + g.finger_thickness, g.finger_height / 2, g.finger_length + g.hand_depth]
        )
        + 0.02
    )
    candidates: list[GraspCandidate] = []
    for si in chosen:
        seed_pt = seg_cloud.points[si]
        normal = seg_cloud.normals[si]
        approach = -normal
        x0 = any_perpendicular(approach)
        for k in range(n_rolls):
            axis = rotation_about_axis(approach, k * np.pi / n_rolls) @ x0
            made = _try_candidate(
                seed_pt, approach, axis, full, full_index, g, roi_r
            )
            if made is not None:
                candidates.append(made)
    for i, c in enumerate(candidates):
        object.__setattr__(c, "candidate_id", i)
    return candidates


def _try_candidate(
    seed_pt: np.ndarray,
    approach: np.ndarray,
    axis: np.ndarray,
    full: PointCloud,
    full_index: SpatialIndex,
    gripper: GripperModel,
    roi_r: float,
) -> GraspCandidate | None:
    rot = hand_rotation(axis, approach)
    for frac in INSERTION_FRACTIONS:
        tip = seed_pt + frac * gripper.finger_length * approach
        roi = full_index.radius(tip, roi_r)
        if len(roi) == 0:
            continue
        pts = full.points[roi]
        nrm = full.normals[roi]
        pose = Pose(rot, tip)
        mask = _enclosed_mask(pts, pose, gripper, gripper.width_max)
        if not mask.any():
            continue
        proj = pts[mask] @ axis
        lo, hi = float(proj.min()), float(proj.max())
        width = hi - lo
        if width < gripper.width_min or width > gripper.width_max:
            continue
        # recenter laterally on the enclosed span
        mid_off = (lo + hi) / 2.0 - float(tip @ axis)
        tip = tip + mid_off * axis
        pose = Pose(rot, tip)
        ok, width = antipodal_check(pose, pts, nrm, gripper)
        if not ok:
            continue
        if width < gripper.width_min or width > gripper.width_max:
            continue
        if not hand_collision_free(pose, width, pts, gripper):
            continue
        # closing region must still contain the seed point
        center, half = closing_region(pose, gripper, gripper.width_max)
        if not _kernels.obb_mask(seed_pt[None, :], rot, center, half)[0]:
            continue
        return GraspCandidate(
            pose=pose,
            approach=approach,
            axis=axis,
            width=width,
            base_point=tip,
        )
    return None
