"""Linear trajectory planning against a voxel occupancy grid, sorted-order
grasp iteration, and simulated execution with a ground-truth grasp oracle.

No trajectory-optimization fallback exists: a linear plan that collides is
reported as infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .geometry import Pose, slerp_rotations
from .robot import ArmModel, GraspCandidate, GripperModel, closing_region, hand_boxes
from .scene import Scene, SceneObject, sample_object_surface, signed_distance

VOXEL_SIZE = 0.01
WAYPOINT_STEP = 0.05
LIFT_HEIGHT = 0.12
PREGRASP_OFFSET = 0.10
PLACE_APPROACH = 0.05
DEFAULT_BASKET = Pose(
    np.array([[1.0, 0, 0], [0, 0, 1.0], [0, -1.0, 0]]),  # approach pointing down
    np.array([0.3, 0.15, 1.1]),
)

# ground-truth execution oracle gates
ORACLE_WIDTH_MIN_MARGIN = 0.004
ORACLE_WIDTH_MAX_MARGIN = 0.002


class VoxelGrid:
    """Dense boolean occupancy over the cloud's bounding box."""

    def __init__(self, points: np.ndarray, voxel: float = VOXEL_SIZE):
        self.voxel = voxel
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            self.origin = np.zeros(3)
            self.grid = np.zeros((0, 0, 0), dtype=bool)
            return
        self.origin = pts.min(axis=0) - voxel
        idx = np.floor((pts - self.origin) / voxel).astype(np.int64)
        shape = idx.max(axis=0) + 2
        self.grid = np.zeros(tuple(shape), dtype=bool)
        self.grid[idx[:, 0], idx[:, 1], idx[:, 2]] = True

    def box_collides(self, rot: np.ndarray, center: np.ndarray, half: np.ndarray) -> bool:
        return _kernels.voxel_box_collides(
            self.grid, self.origin, self.voxel, rot, center, half, self.voxel / 2
        )


@dataclass(frozen=True)
class TrajectoryPlan:
    waypoints: tuple[Pose, ...]
    phases: tuple[str, ...]
    attached_object_id: int = -1

    def __post_init__(self):
        if len(self.waypoints) != len(self.phases):
            raise ValueError("one phase label per waypoint")

    def phase_slice(self, name: str) -> list[Pose]:
        return [w for w, p in zip(self.waypoints, self.phases) if p == name]


class Infeasible(RuntimeError):
    """No collision-free linear trajectory exists."""


def _interpolate(start: Pose, goal: Pose, step: float) -> list[Pose]:
    d = float(np.linalg.norm(goal.translation - start.translation))
    n = max(1, int(np.ceil(d / step)))
    fr = np.linspace(0.0, 1.0, n + 1)
    rots = slerp_rotations(start.rotation, goal.rotation, fr)
    return [
        Pose(rots[i], start.translation + fr[i] * (goal.translation - start.translation))
        for i in range(len(fr))
    ]


def _hand_clear(pose: Pose, opening: float, gripper: GripperModel, grid: VoxelGrid) -> bool:
    for center, half in hand_boxes(pose, gripper, opening):
        if grid.box_collides(pose.rotation, center, half):
            return False
    return True


def plan_linear(
    start: Pose,
    goal: Pose,
    grid: VoxelGrid,
    gripper: GripperModel,
    opening: float,
    step: float = WAYPOINT_STEP,
    phase: str = "reach",
) -> TrajectoryPlan:
    """Straight-line position interpolation with orientation slerp.

    Every sample's gripper volume is checked against the occupancy grid;
    raises Infeasible on contact.
    """
    poses = _interpolate(start, goal, step)
    for p in poses:
        if not _hand_clear(p, opening, gripper, grid):
            raise Infeasible(f"collision during {phase}")
    return TrajectoryPlan(tuple(poses), tuple(phase for _ in poses))


@dataclass(frozen=True)
class MotionContext:
    arm: ArmModel
    gripper: GripperModel
    full_cloud: PointCloud
    segment_points: np.ndarray  # target object points, excluded in-grasp
    basket: Pose = field(default_factory=lambda: DEFAULT_BASKET)

    def grid_full(self) -> VoxelGrid:
        return VoxelGrid(self.full_cloud.points)

    def grid_without_target(self) -> VoxelGrid:
        if len(self.segment_points) == 0:
            return self.grid_full()
        from scipy.spatial import cKDTree

        tree = cKDTree(self.segment_points)
        d, _ = tree.query(self.full_cloud.points, k=1)
        keep = d > 1e-9
        return VoxelGrid(self.full_cloud.points[keep])


def approach_checker(ctx: MotionContext) -> Callable[[GraspCandidate], bool]:
    """Collision test for the pregrasp->grasp linear approach segment."""
    grid = ctx.grid_without_target()

    def clear(c: GraspCandidate) -> bool:
        pre = Pose(c.pose.rotation, c.position - PREGRASP_OFFSET * c.approach)
        opening = min(c.width + 0.01, ctx.gripper.width_max)
        try:
            plan_linear(pre, c.pose, grid, ctx.gripper, opening, phase="reach")
        except Infeasible:
            return False
        return True

    return clear


def _home_pose(arm: ArmModel) -> Pose:
    from .geometry import rpy_to_rotation

    h = arm.home
    return Pose(rpy_to_rotation(h[3:]), h[:3])


def plan_task(
    grasps: list[GraspCandidate],
    ctx: MotionContext,
    mode: str = "drop",
    place_pose: Pose | None = None,
) -> tuple[GraspCandidate, TrajectoryPlan]:
    """First grasp in the given order whose whole task sequence plans cleanly.

    Phases: reach (home -> pregrasp -> grasp), grasp (close, target points
    excluded), lift, transfer (to basket or the place approach), release.
    """
    if not grasps:
        raise Infeasible("no grasps to plan")
    if mode == "place" and place_pose is None:
        raise ValueError("place mode needs a place pose")
    grid_full = ctx.grid_full()
    grid_no_target = ctx.grid_without_target()
    errors = []
    for c in grasps:
        try:
            plan = _plan_single(c, ctx, grid_full, grid_no_target, mode, place_pose)
            return c, plan
        except Infeasible as e:
            errors.append(str(e))
    raise Infeasible("all grasps infeasible: " + "; ".join(errors[:4]))


def _plan_single(
    c: GraspCandidate,
    ctx: MotionContext,
    grid_full: VoxelGrid,
    grid_no_target: VoxelGrid,
    mode: str,
    place_pose: Pose | None,
) -> TrajectoryPlan:
    g = ctx.gripper
    opening = min(c.width + 0.01, g.width_max)
    home = _home_pose(ctx.arm)
    pre = Pose(c.pose.rotation, c.position - PREGRASP_OFFSET * c.approach)
    segs: list[TrajectoryPlan] = []
    segs.append(plan_linear(home, pre, grid_full, g, opening, phase="reach"))
    segs.append(plan_linear(pre, c.pose, grid_no_target, g, opening, phase="reach"))
    # grasp phase: fingers close at the grasp pose; target points excluded
    if not _hand_clear(c.pose, c.width, g, grid_no_target):
        raise Infeasible("collision during grasp")
    segs.append(TrajectoryPlan((c.pose,), ("grasp",)))
    lift_goal = Pose(c.pose.rotation, c.position + np.array([0, 0, LIFT_HEIGHT]))
    segs.append(plan_linear(c.pose, lift_goal, grid_no_target, g, c.width, phase="lift"))
    if mode == "drop":
        transfer_goal = ctx.basket
    else:
        transfer_goal = Pose(
            place_pose.rotation, place_pose.translation + np.array([0, 0, PLACE_APPROACH])
        )
    segs.append(
        plan_linear(lift_goal, transfer_goal, grid_no_target, g, c.width, phase="transfer")
    )
    if mode == "place":
        segs.append(
            plan_linear(transfer_goal, place_pose, grid_no_target, g, c.width, phase="transfer")
        )
    release_pose = segs[-1].waypoints[-1]
    segs.append(TrajectoryPlan((release_pose,), ("release",)))
    waypoints = tuple(w for s in segs for w in s.waypoints)
    phases = tuple(p for s in segs for p in s.phases)
    return TrajectoryPlan(waypoints, phases)


# ---------------------------------------------------------------------------
# simulated execution with a ground-truth oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExecutionOutcome:
    success: bool
    grasped_object_id: int
    reason: str = ""


def grasped_object(scene: Scene, grasp: GraspCandidate, gripper: GripperModel, samples: int = 600) -> int:
    """Object whose true surface has the most samples in the closing region; -1 if none."""
    center, half = closing_region(grasp.pose, gripper, max(grasp.width, 1e-4))
    best_id, best_count = -1, 0
    for obj in scene.objects:
        pts, _ = sample_object_surface(obj, samples, np.random.default_rng(12345))
        inside = int(_kernels.obb_mask(pts, grasp.pose.rotation, center, half).sum())
        if inside > best_count:
            best_count = inside
            best_id = obj.object_id
    return best_id


def _oracle_valid_grasp(
    obj: SceneObject, grasp: GraspCandidate, gripper: GripperModel
) -> tuple[bool, str]:
    """Deterministic geometric validity on the true primitive."""
    rng = np.random.default_rng(99)
    pts, nrm = sample_object_surface(obj, 1200, rng, include_bottom=True)
    center, half = closing_region(grasp.pose, gripper, gripper.width_max)
    inside = _kernels.obb_mask(pts, grasp.pose.rotation, center, half)
    if not inside.any():
        return False, "closing region misses the object"
    axis = grasp.axis
    proj = pts[inside] @ axis
    width = float(proj.max() - proj.min())
    if width < gripper.width_min + ORACLE_WIDTH_MIN_MARGIN:
        return False, "object sliver too narrow for a stable grasp"
    if width > gripper.width_max - ORACLE_WIDTH_MAX_MARGIN:
        return False, "object too wide for the gripper"
    from .grasp_gen import CONTACT_BAND, FRICTION_HALF_ANGLE

    cos_th = np.cos(FRICTION_HALF_ANGLE)
    band = CONTACT_BAND
    lo, hi = float(proj.min()), float(proj.max())
    n_in = nrm[inside]
    ok_low = bool((n_in[proj <= lo + band] @ -axis >= cos_th).any())
    ok_high = bool((n_in[proj >= hi - band] @ axis >= cos_th).any())
    if not (ok_low and ok_high):
        return False, "contacts not antipodal on the true surface"
    # fingers must not penetrate the primitive at the achieved opening
    opening = width + 1e-3
    for fc, fh in hand_boxes(grasp.pose, gripper, opening)[:2]:
        grid = _box_sample_grid(fc, fh, grasp.pose.rotation, 0.004)
        if (signed_distance(obj, grid) < -1e-4).any():
            return False, "finger intersects the object"
    return True, ""


def _box_sample_grid(center, half, rot, step):
    axes = [np.arange(-h, h + step / 2, step) if h > step else np.array([0.0]) for h in half]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    local = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return local @ rot.T + center


def execute_sim(
    plan: TrajectoryPlan,
    scene: Scene,
    grasp: GraspCandidate,
    ctx: MotionContext,
) -> ExecutionOutcome:
    """Simulated execution: ground-truth grasp validity plus a transfer sweep
    of the attached object through the occupancy grid."""
    gid = grasped_object(scene, grasp, ctx.gripper)
    if gid < 0:
        return ExecutionOutcome(False, -1, "fingers closed on nothing")
    obj = scene.object_by_id(gid)
    ok, reason = _oracle_valid_grasp(obj, grasp, ctx.gripper)
    if not ok:
        return ExecutionOutcome(False, gid, reason)
    # sweep the attached object along lift+transfer waypoints
    grid = ctx.grid_without_target()
    obj_pts, _ = sample_object_surface(obj, 400, np.random.default_rng(7))
    rel = obj_pts - grasp.position
    start_rot_t = grasp.pose.rotation.T
    for pose, phase in zip(plan.waypoints, plan.phases):
        if phase not in ("lift", "transfer"):
            continue
        moved = (rel @ start_rot_t @ pose.rotation.T) + pose.translation
        idx = np.floor((moved - grid.origin) / grid.voxel).astype(np.int64)
        inb = (idx >= 0).all(axis=1) & (idx < np.asarray(grid.grid.shape)).all(axis=1)
        if inb.any() and grid.grid[idx[inb, 0], idx[inb, 1], idx[inb, 2]].any():
            return ExecutionOutcome(False, gid, "attached object collided in transfer")
    return ExecutionOutcome(True, gid, "")
