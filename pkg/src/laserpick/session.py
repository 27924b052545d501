"""Pipeline state machine: perception -> planning -> execution with UI
feedback, driven by explicit events.

Phases move strictly forward (or to Failed); Reset returns to Idle from any
phase.  Automatic selection skips AwaitingSelection.  Every stochastic step
draws from a stream derived from the session seed, so a session replays
byte-identically.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

import numpy as np

from .cloud import PointCloud, merge_clouds, voxel_downsample
from .geometry import Pose
from .laser import LaserTarget, detect_target
from .motion import (
    ExecutionOutcome,
    Infeasible,
    MotionContext,
    TrajectoryPlan,
    approach_checker,
    execute_sim,
    plan_linear,
    plan_task,
)
from .preprocess import (
    PlaneRemovalReport,
    SegmentationFailure,
    SegmentedCloud,
    default_min_inliers,
    extract_clusters,
    remove_horizontal_planes,
    segment_target,
)
from .projector import ProjectorModel, calibrate, highlight_target
from .robot import ArmModel, GraspCandidate, GripperModel
from .scene import Scene, primitive_set, signed_distance
from .scoring import (
    GraspCluster,
    ScoreContext,
    ScorerConfig,
    cluster_for_manual,
    compute_place_pose,
    filter_feasible,
    rank,
    score_total,
)
from .sensors import LaserDevice, VirtualSensor, build_rig, render_depth, render_ir
from .spatial import estimate_normals


class Phase(str, Enum):
    IDLE = "Idle"
    CLOUD_ACQUIRED = "CloudAcquired"
    LASER_DETECTED = "LaserDetected"
    SEGMENTED = "Segmented"
    GRASPS_DETECTED = "GraspsDetected"
    FILTERED = "Filtered"
    AWAITING_SELECTION = "AwaitingSelection"
    PLANNED = "Planned"
    EXECUTED = "Executed"
    PLACE_PENDING = "PlacePending"
    DONE = "Done"
    FAILED = "Failed"


class FailureClass(str, Enum):
    DETECT_LASER = "DetectLaser"
    DETECT_GRASP = "DetectGrasp"
    IK_PLANNING = "IKPlanning"
    WRONG_OBJECT = "WrongObject"
    EXECUTE = "Execute"


class Event(str, Enum):
    ACQUIRE = "acquire"
    SET_LASER = "set_laser"
    SEGMENT = "segment"
    DETECT_GRASPS = "detect_grasps"
    FILTER = "filter"
    PLAN = "plan"
    TOGGLE = "toggle"
    SELECT = "select"
    CONFIRM = "confirm"
    EXECUTE = "execute"
    FINISH = "finish"
    SET_PLACE = "set_place"
    RESET = "reset"


# forward order of phases along the workflow of the pipeline diagram
PHASE_ORDER = [
    Phase.IDLE,
    Phase.CLOUD_ACQUIRED,
    Phase.LASER_DETECTED,
    Phase.SEGMENTED,
    Phase.GRASPS_DETECTED,
    Phase.FILTERED,
    Phase.AWAITING_SELECTION,
    Phase.PLANNED,
    Phase.EXECUTED,
    Phase.PLACE_PENDING,
    Phase.DONE,
]

LEGAL_EVENTS: dict[Phase, set[Event]] = {
    Phase.IDLE: {Event.ACQUIRE, Event.RESET},
    Phase.CLOUD_ACQUIRED: {Event.SET_LASER, Event.RESET},
    Phase.LASER_DETECTED: {Event.SEGMENT, Event.RESET},
    Phase.SEGMENTED: {Event.DETECT_GRASPS, Event.RESET},
    Phase.GRASPS_DETECTED: {Event.FILTER, Event.RESET},
    Phase.FILTERED: {Event.PLAN, Event.RESET},
    Phase.AWAITING_SELECTION: {Event.TOGGLE, Event.SELECT, Event.CONFIRM, Event.RESET},
    Phase.PLANNED: {Event.EXECUTE, Event.RESET},
    Phase.EXECUTED: {Event.FINISH, Event.RESET},
    Phase.PLACE_PENDING: {Event.SET_PLACE, Event.RESET},
    Phase.DONE: {Event.RESET},
    Phase.FAILED: {Event.RESET},
}


class IllegalTransition(RuntimeError):
    def __init__(self, phase: Phase, event: Event):
        super().__init__(f"event {event.value!r} is illegal in phase {phase.value!r}")
        self.phase = phase
        self.event = event


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "pick_drop"          # pick_drop | pick_place
    selection: str = "automatic"     # automatic | manual
    sensor_width: int = 320
    sensor_height: int = 240
    depth_noise_sigma: float = 0.0015
    normals_k: int = 12
    fuse_voxel: float = 0.003
    min_segment_pts: int = 50
    min_plane_inliers: Optional[int] = None  # None -> max(500, 5% of cloud)
    n_seeds: int = 60
    n_rolls: int = 8
    retry_cap: int = 3
    laser_origin: tuple[float, float, float] = (0.25, 0.05, 1.05)
    laser_baseline: float = 0.032
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    inject_laser_failures: frozenset[int] = frozenset()  # attempt epochs to force a miss

    def __post_init__(self):
        if self.mode not in ("pick_drop", "pick_place"):
            raise ValueError("mode must be pick_drop or pick_place")
        if self.selection not in ("automatic", "manual"):
            raise ValueError("selection must be automatic or manual")


@dataclass(frozen=True)
class SessionState:
    phase: Phase = Phase.IDLE
    failure: Optional[FailureClass] = None
    fused: Optional[PointCloud] = None
    laser_target: Optional[LaserTarget] = None
    plane_report: Optional[PlaneRemovalReport] = None
    objects_cloud: Optional[PointCloud] = None  # fused minus removed planes
    segment: Optional[SegmentedCloud] = None
    candidates: tuple[GraspCandidate, ...] = ()
    feasible: tuple[GraspCandidate, ...] = ()
    ranked: tuple[GraspCandidate, ...] = ()
    clusters: tuple[GraspCluster, ...] = ()
    selected_cluster: int = 0
    chosen_grasp: Optional[GraspCandidate] = None
    plan: Optional[TrajectoryPlan] = None
    outcome: Optional[ExecutionOutcome] = None
    intended_object: int = -1
    pick_surface_height: Optional[float] = None
    place_target: Optional[LaserTarget] = None
    place_pose: Optional[Pose] = None
    epoch: int = 0  # attempt counter, bumps on acquire


def nearest_object_id(scene: Scene, point: np.ndarray) -> int:
    """Ground-truth object nearest the point (by signed surface distance)."""
    best, best_d = -1, np.inf
    for obj in scene.objects:
        d = float(signed_distance(obj, np.asarray(point).reshape(1, 3))[0])
        if d < best_d:
            best_d = d
            best = obj.object_id
    return best


class Session:
    """One pipeline instance over a simulated scene.

    Mutable holder; the snapshot in ``state`` is immutable and replaced on
    every transition, so concurrent readers always see a consistent view.
    """

    def __init__(
        self,
        scene: Scene,
        config: PipelineConfig | None = None,
        seed: int = 0,
        arm: ArmModel | None = None,
        gripper: GripperModel | None = None,
    ):
        self.scene = scene
        self.config = config if config is not None else PipelineConfig()
        self.seed = int(seed)
        self.arm = arm if arm is not None else ArmModel()
        self.gripper = gripper if gripper is not None else GripperModel()
        self.sensors: list[VirtualSensor] = build_rig(
            width=self.config.sensor_width,
            height=self.config.sensor_height,
            depth_noise_sigma=self.config.depth_noise_sigma,
        )
        self.laser_device = LaserDevice(
            origin=np.asarray(self.config.laser_origin),
            baseline=self.config.laser_baseline,
        )
        # projector co-located with the high sensor
        self.projector: ProjectorModel = calibrate(
            2.0, 1.5, 640, 480, 1.0, 0.75, 2.0, pose=self.sensors[4].pose
        )
        self.state = SessionState()
        self.timings: dict[str, float] = {}
        self.events: list[dict] = []
        self._record("created")

    # -- helpers ----------------------------------------------------------

    def _rng(self, tag: str, *extra: int) -> np.random.Generator:
        key = zlib.crc32(tag.encode("ascii"))
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, key, *[int(e) for e in extra]])
        )

    def _record(self, event: str):
        st = self.state
        self.events.append(
            {
                "seq": len(self.events),
                "event": event,
                "phase": st.phase.value,
                "failure": st.failure.value if st.failure else None,
                "selected_cluster": st.selected_cluster,
                "chosen_grasp": (
                    st.chosen_grasp.candidate_id if st.chosen_grasp else None
                ),
            }
        )

    def _fail(self, failure: FailureClass) -> SessionState:
        return replace(self.state, phase=Phase.FAILED, failure=failure)

    def sensor_origins(self) -> dict[int, np.ndarray]:
        return {s.sensor_id: s.origin for s in self.sensors}

    def motion_context(self) -> MotionContext:
        st = self.state
        seg_pts = st.segment.cloud.points if st.segment is not None else np.empty((0, 3))
        return MotionContext(
            arm=self.arm,
            gripper=self.gripper,
            full_cloud=st.fused,
            segment_points=seg_pts,
        )

    def dsar_mask(self) -> np.ndarray:
        st = self.state
        if st.phase == Phase.PLACE_PENDING or st.place_pose is not None:
            if st.place_pose is None:
                raise ValueError("no active place target")
            return highlight_target(
                self.projector, "place_point", place_position=st.place_pose.translation
            )
        if st.segment is None:
            raise ValueError("no active pick target")
        return highlight_target(self.projector, "pick_segment", segment=st.segment)

    # -- event handlers ----------------------------------------------------

    def _do_acquire(self, payload) -> SessionState:
        epoch = self.state.epoch + 1
        rng = self._rng("render", epoch)
        prims = primitive_set(self.scene)
        clouds = [
            render_depth(self.scene, s, rng=rng, prims=prims) for s in self.sensors
        ]
        fused = voxel_downsample(merge_clouds(clouds), self.config.fuse_voxel)
        if len(fused) >= self.config.normals_k:
            fused = estimate_normals(
                fused, k=self.config.normals_k, sensor_origins=self.sensor_origins()
            )
        return SessionState(phase=Phase.CLOUD_ACQUIRED, fused=fused, epoch=epoch)

    def _resolve_aim(self, payload) -> np.ndarray:
        if "point" in payload:
            return np.asarray(payload["point"], dtype=float)
        if "pixel" in payload:
            sid = int(payload["sensor"])
            sensor = next(s for s in self.sensors if s.sensor_id == sid)
            u, v = payload["pixel"]
            d = sensor.ray_through_pixel(float(u), float(v))
            rel = self.state.fused.points - sensor.origin
            t = rel @ d
            ahead = t > 0.05
            if not ahead.any():
                return sensor.origin + 2.0 * d
            perp = np.linalg.norm(rel[ahead] - t[ahead, None] * d, axis=1)
            return self.state.fused.points[np.nonzero(ahead)[0][np.argmin(perp)]]
        raise ValueError("laser payload needs 'point' or 'sensor'+'pixel'")

    def _do_set_laser(self, payload) -> SessionState:
        st = self.state
        aim = self._resolve_aim(payload or {})
        if st.epoch in self.config.inject_laser_failures:
            return self._fail(FailureClass.DETECT_LASER)
        device = self.laser_device.aimed_at(aim)
        rng = self._rng("ir", st.epoch)
        prims = primitive_set(self.scene)
        images = [
            render_ir(self.scene, s, device, rng=rng, prims=prims) for s in self.sensors
        ]
        target = detect_target(images, self.sensors, st.fused)
        if target is None:
            return self._fail(FailureClass.DETECT_LASER)
        intended = nearest_object_id(self.scene, aim)
        return replace(
            st, phase=Phase.LASER_DETECTED, laser_target=target, intended_object=intended
        )

    def _do_segment(self, payload) -> SessionState:
        st = self.state
        min_inl = self.config.min_plane_inliers
        if min_inl is None:
            min_inl = default_min_inliers(len(st.fused))
        cleaned, report = remove_horizontal_planes(
            st.fused, min_inliers=min_inl, seed=self.seed + st.epoch
        )
        clusters = extract_clusters(cleaned)
        try:
            seg = segment_target(
                cleaned, clusters, st.laser_target, min_pts=self.config.min_segment_pts
            )
        except SegmentationFailure:
            return self._fail(FailureClass.DETECT_GRASP)
        heights = report.surface_heights()
        pick_h = None
        if heights:
            seg_bottom = float(seg.cloud.points[:, 2].min())
            below = [h for h in heights if h <= seg_bottom + 0.02]
            pick_h = max(below) if below else max(heights)
        return replace(
            st,
            phase=Phase.SEGMENTED,
            plane_report=report,
            objects_cloud=cleaned,
            segment=seg,
            pick_surface_height=pick_h,
        )

    def _do_detect_grasps(self, payload) -> SessionState:
        st = self.state
        from .grasp_gen import sample_candidates

        cands = sample_candidates(
            st.segment,
            st.fused,
            self.gripper,
            n_seeds=self.config.n_seeds,
            n_rolls=self.config.n_rolls,
            seed=self.seed + 31 * st.epoch,
        )
        if not cands:
            return self._fail(FailureClass.DETECT_GRASP)
        return replace(st, phase=Phase.GRASPS_DETECTED, candidates=tuple(cands))

    def _do_filter(self, payload) -> SessionState:
        st = self.state
        ctx = self.motion_context()
        feasible = filter_feasible(
            list(st.candidates), self.arm, approach_checker(ctx)
        )
        if not feasible:
            return self._fail(FailureClass.IK_PLANNING)
        sctx = ScoreContext(
            gripper=self.gripper,
            arm=self.arm,
            seg=st.segment,
            laser_position=st.laser_target.position,
            config=self.config.scorer,
        )
        scored = [score_total(c, sctx) for c in feasible]
        return replace(st, phase=Phase.FILTERED, feasible=tuple(scored))

    def _task_mode(self) -> str:
        return "drop" if self.config.mode == "pick_drop" else "place"

    def _do_plan(self, payload) -> SessionState:
        st = self.state
        ranked = rank(list(st.feasible), st.laser_target.position)
        if self.config.selection == "manual":
            clusters = cluster_for_manual(ranked)
            return replace(
                st,
                phase=Phase.AWAITING_SELECTION,
                ranked=tuple(ranked),
                clusters=tuple(clusters),
                selected_cluster=0,
            )
        return self._plan_grasps(replace(st, ranked=tuple(ranked)), ranked)

    def _plan_grasps(self, st: SessionState, grasps: list[GraspCandidate]) -> SessionState:
        ctx = self.motion_context()
        try:
            chosen, plan = plan_task(grasps, ctx, mode=self._task_mode())
        except Infeasible:
            self.state = st  # keep ranking/cluster artifacts with the failure
            return self._fail(FailureClass.IK_PLANNING)
        return replace(st, phase=Phase.PLANNED, chosen_grasp=chosen, plan=plan)

    def _do_toggle(self, payload) -> SessionState:
        st = self.state
        if not st.clusters:
            return st
        return replace(st, selected_cluster=(st.selected_cluster + 1) % len(st.clusters))

    def _do_select(self, payload) -> SessionState:
        st = self.state
        k = int((payload or {}).get("cluster", st.selected_cluster))
        if not (0 <= k < len(st.clusters)):
            raise ValueError(f"cluster index {k} out of range")
        st = replace(st, selected_cluster=k)
        members = sorted(st.clusters[k].members, key=lambda c: -c.scores.total)
        return self._plan_grasps(st, members)

    def _do_confirm(self, payload) -> SessionState:
        return self._do_select({"cluster": self.state.selected_cluster})

    def _do_execute(self, payload) -> SessionState:
        st = self.state
        ctx = self.motion_context()
        outcome = execute_sim(st.plan, self.scene, st.chosen_grasp, ctx)
        st = replace(st, outcome=outcome)
        if not outcome.success:
            self.state = st
            return self._fail(FailureClass.EXECUTE)
        # the grasped object leaves the scene (transported by the arm)
        self.scene = self.scene.without_object(outcome.grasped_object_id)
        if outcome.grasped_object_id != st.intended_object:
            self.state = st
            return self._fail(FailureClass.WRONG_OBJECT)
        return replace(st, phase=Phase.EXECUTED)

    def _do_finish(self, payload) -> SessionState:
        st = self.state
        if self.config.mode == "pick_place":
            return replace(st, phase=Phase.PLACE_PENDING)
        return replace(st, phase=Phase.DONE)

    def _do_set_place(self, payload) -> SessionState:
        st = self.state
        aim = self._resolve_aim(payload or {})
        device = self.laser_device.aimed_at(aim)
        rng = self._rng("ir_place", st.epoch)
        prims = primitive_set(self.scene)
        images = [
            render_ir(self.scene, s, device, rng=rng, prims=prims) for s in self.sensors
        ]
        # re-render depth for the place view (object now gone from the scene)
        rng_d = self._rng("render_place", st.epoch)
        clouds = [
            render_depth(self.scene, s, rng=rng_d, prims=prims) for s in self.sensors
        ]
        place_view = merge_clouds(clouds)
        target = detect_target(images, self.sensors, place_view)
        if target is None:
            return self._fail(FailureClass.DETECT_LASER)
        if st.pick_surface_height is None:
            raise ValueError("no recorded pick surface")
        place_pose = compute_place_pose(
            st.chosen_grasp, st.pick_surface_height, target.position
        )
        st = replace(st, place_target=target, place_pose=place_pose)
        ctx = MotionContext(
            arm=self.arm,
            gripper=self.gripper,
            full_cloud=place_view,
            segment_points=np.empty((0, 3)),
        )
        grid = ctx.grid_full()
        lift = Pose(
            st.chosen_grasp.pose.rotation,
            st.chosen_grasp.position + np.array([0.0, 0.0, 0.12]),
        )
        approach = Pose(
            place_pose.rotation, place_pose.translation + np.array([0.0, 0.0, 0.05])
        )
        try:
            plan_linear(lift, approach, grid, self.gripper, st.chosen_grasp.width,
                        phase="transfer")
            plan_linear(approach, place_pose, grid, self.gripper,
                        st.chosen_grasp.width, phase="transfer")
        except Infeasible:
            self.state = st
            return self._fail(FailureClass.IK_PLANNING)
        if not self._place_on_surface(target.position):
            self.state = st
            return self._fail(FailureClass.EXECUTE)
        return replace(st, phase=Phase.DONE)

    def _place_on_surface(self, point: np.ndarray) -> bool:
        for s in self.scene.surfaces:
            dx = abs(point[0] - s.center[0])
            dy = abs(point[1] - s.center[1])
            if (
                dx <= s.extent[0] / 2
                and dy <= s.extent[1] / 2
                and abs(point[2] - s.height) <= 0.02
            ):
                return True
        return False

    def _do_reset(self, payload) -> SessionState:
        return SessionState(epoch=self.state.epoch)


_HANDLERS = {
    Event.ACQUIRE: Session._do_acquire,
    Event.SET_LASER: Session._do_set_laser,
    Event.SEGMENT: Session._do_segment,
    Event.DETECT_GRASPS: Session._do_detect_grasps,
    Event.FILTER: Session._do_filter,
    Event.PLAN: Session._do_plan,
    Event.TOGGLE: Session._do_toggle,
    Event.SELECT: Session._do_select,
    Event.CONFIRM: Session._do_confirm,
    Event.EXECUTE: Session._do_execute,
    Event.FINISH: Session._do_finish,
    Event.SET_PLACE: Session._do_set_place,
    Event.RESET: Session._do_reset,
}


def step(session: Session, event: Event, payload: dict | None = None) -> SessionState:
    """Apply one event; illegal events raise and leave the state unchanged."""
    phase = session.state.phase
    if event not in LEGAL_EVENTS[phase]:
        raise IllegalTransition(phase, event)
    t0 = time.perf_counter()
    new_state = _HANDLERS[event](session, payload)
    session.timings[event.value] = time.perf_counter() - t0
    session.state = new_state
    session._record(event.value)
    return new_state
