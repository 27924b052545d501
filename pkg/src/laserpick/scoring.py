"""Grasp feasibility filtering, the five-factor selection objective,
ranking, manual-selection clustering and place-pose computation.

The objective is a product C = C_w * C_j * C_a * C_s * C_p of factors that
penalize widths near the gripper limits, long configuration-space moves,
side grasps (except frontal ones), hands far from the segmented cloud, and
hands far from the laser target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose
from .preprocess import SegmentedCloud
from .robot import ArmModel, GraspCandidate, GripperModel, ScoreBreakdown


@dataclass(frozen=True)
class ScorerConfig:
    width_margin: float = 0.015     # W_d
    max_joint_distance: float = 2.0  # J_m, weighted-norm units
    laser_threshold: float = 0.05    # th
    frame: str = "world"

    def __post_init__(self):
        if min(self.width_margin, self.max_joint_distance, self.laser_threshold) <= 0:
            raise ValueError("scorer parameters must be positive")


def score_width(width: float, gripper: GripperModel, width_margin: float = 0.015) -> float:
    margin = min(abs(width - gripper.width_min), abs(width - gripper.width_max))
    return 1.0 - max(0.0, width_margin - margin) / width_margin


def score_joint(initial, config, max_joint_distance: float, arm: ArmModel | None = None) -> float:
    if arm is not None:
        d = arm.joint_distance(initial, config)
    else:
        d = float(np.linalg.norm(np.asarray(initial, float) - np.asarray(config, float)))
    return max(0.0, 1.0 - d / max_joint_distance)


def score_approach(approach: np.ndarray, axis: np.ndarray) -> float:
    """Prefers top grasps; side grasps are scored by how frontal they are."""
    if abs(float(axis[2])) > 0.8:
        return 0.5 + 0.5 * abs(float(approach[1]))
    return 1.0


def score_segment(base_point: np.ndarray, seg: SegmentedCloud, finger_length: float) -> float:
    d = float(np.min(np.linalg.norm(seg.cloud.points - np.asarray(base_point), axis=1)))
    return 1.0 - min(finger_length, d) / finger_length


def score_laser(base_point: np.ndarray, laser_position: np.ndarray, threshold: float = 0.05) -> float:
    d = float(np.linalg.norm(np.asarray(laser_position) - np.asarray(base_point)))
    return float(np.exp(-10.0 * max(0.0, d - threshold)))


@dataclass(frozen=True)
class ScoreContext:
    gripper: GripperModel
    arm: ArmModel
    seg: SegmentedCloud
    laser_position: np.ndarray
    config: ScorerConfig = field(default_factory=ScorerConfig)


def score_total(candidate: GraspCandidate, ctx: ScoreContext) -> GraspCandidate:
    """Attach the factor breakdown and product to the candidate."""
    if candidate.joint_config is None:
        raise ValueError("candidate must carry a joint config (run filter_feasible)")
    breakdown = ScoreBreakdown(
        width=score_width(candidate.width, ctx.gripper, ctx.config.width_margin),
        joint=score_joint(
            ctx.arm.home, candidate.joint_config, ctx.config.max_joint_distance, ctx.arm
        ),
        approach=score_approach(candidate.approach, candidate.axis),
        segment=score_segment(candidate.base_point, ctx.seg, ctx.gripper.finger_length),
        laser=score_laser(
            candidate.base_point, ctx.laser_position, ctx.config.laser_threshold
        ),
    )
    return candidate.with_scores(breakdown)


def filter_feasible(
    candidates: list[GraspCandidate],
    arm: ArmModel,
    approach_clear,
) -> list[GraspCandidate]:
    """Keep reachable candidates with a collision-free linear approach.

    ``approach_clear(candidate)`` is supplied by the motion module; kept
    candidates are annotated with their arm configuration.
    """
    out = []
    for c in candidates:
        if not arm.reachable(c.position):
            continue
        if not approach_clear(c):
            continue
        out.append(c.with_joint_config(arm.config_for_pose(c.pose)))
    return out


def rank(
    candidates: list[GraspCandidate], laser_position: np.ndarray | None = None
) -> list[GraspCandidate]:
    """Stable descending sort by total score.

    Ties break by distance of the base point to the laser target, then by
    input order.
    """
    p = None if laser_position is None else np.asarray(laser_position)

    def key(item):
        i, c = item
        d = 0.0 if p is None else float(np.linalg.norm(p - c.base_point))
        return (-c.scores.total, d, i)

    return [c for _, c in sorted(enumerate(candidates), key=key)]


@dataclass(frozen=True)
class GraspCluster:
    members: tuple[GraspCandidate, ...]
    representative: int  # index into members

    @property
    def best(self) -> GraspCandidate:
        return self.members[self.representative]

    @property
    def score(self) -> float:
        return self.best.scores.total


GRASP_CLUSTER_DIAMETER = 0.02


def cluster_for_manual(
    candidates: list[GraspCandidate], d_max: float = GRASP_CLUSTER_DIAMETER
) -> list[GraspCluster]:
    """Complete-linkage clusters of grasp positions with diameter <= d_max.

    The representative is the best-scoring member; clusters come back ordered
    by representative score, best first.
    """
    if not candidates:
        return []
    pos = np.asarray([c.position for c in candidates])
    if len(candidates) == 1:
        labels = np.zeros(1, dtype=int)
    else:
        from scipy.cluster.hierarchy import fcluster, linkage
        from scipy.spatial.distance import pdist

        z = linkage(pdist(pos), method="complete")
        labels = fcluster(z, t=d_max, criterion="distance") - 1
    clusters = []
    for lab in sorted(set(labels.tolist())):
        members = tuple(c for c, l in zip(candidates, labels) if l == lab)
        rep = int(np.argmax([m.scores.total for m in members]))
        clusters.append(GraspCluster(members=members, representative=rep))
    clusters.sort(key=lambda cl: -cl.score)
    return clusters


def compute_place_pose(
    executed_grasp: GraspCandidate,
    pick_surface_height: float,
    place_position: np.ndarray,
) -> Pose:
    """Place pose: laser-designated position lifted by the pick-height offset,
    with the orientation the object was grasped in."""
    offset = float(executed_grasp.position[2]) - pick_surface_height
    target = np.asarray(place_position, dtype=float).copy()
    target[2] += offset
    return Pose(executed_grasp.pose.rotation, target)


def format_score_report(candidates: list[GraspCandidate]) -> str:
    """One line per candidate: the five factors and the product, 9 digits."""
    lines = []
    for c in candidates:
        s = c.scores
        lines.append(
            f"grasp {c.candidate_id}: "
            f"C_w={s.width:.9g} C_j={s.joint:.9g} C_a={s.approach:.9g} "
            f"C_s={s.segment:.9g} C_p={s.laser:.9g} C={s.total:.9g}"
        )
    return "\n".join(lines) + ("\n" if lines else "")
