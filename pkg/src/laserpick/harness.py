"""Scenario harness: seeded trials with an ideal simulated operator,
per-attempt metrics, aggregate benchmark tables, and the automatic-vs-manual
comparison on adjacency scenes."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .scene import Scene, SceneObject, Surface, sample_adjacent_pair, sample_scene
from .session import (
    Event,
    FailureClass,
    Phase,
    PipelineConfig,
    Session,
    nearest_object_id,
    step,
)


def aim_point(obj: SceneObject) -> np.ndarray:
    """Where the ideal operator points the laser.

    Top-face center for flat-topped objects (keeps both beam dots on the
    object, as a real operator would confirm); volume center for spheres.
    """
    p = obj.pose.translation.copy()
    if obj.kind in ("box", "cylinder"):
        p[2] = obj.top_z() - 1e-4
    return p


def target_order(scene: Scene, seed: int) -> list[int]:
    """Seeded random order in which the operator works through the objects."""
    ids = [o.object_id for o in scene.objects]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7A6B]))
    return [ids[i] for i in rng.permutation(len(ids))]


def pick_on_target_cluster(session: Session, target_id: int) -> int:
    """Ideal manual choice: best-scoring cluster whose representative grasp
    sits on the target object; falls back to the overall best cluster."""
    clusters = session.state.clusters
    for k, cl in enumerate(clusters):  # already ordered best score first
        if nearest_object_id(session.scene, cl.best.base_point) == target_id:
            return k
    return 0


def place_point_for(scene: Scene, rng: np.random.Generator) -> np.ndarray:
    """A free spot on the first surface for pick-and-place trials."""
    s = scene.surfaces[0]
    for _ in range(200):
        x = s.center[0] + rng.uniform(-s.extent[0] / 2 + 0.08, s.extent[0] / 2 - 0.08)
        y = s.center[1] + rng.uniform(-s.extent[1] / 2 + 0.08, s.extent[1] / 2 - 0.08)
        p = np.array([x, y, s.height])
        clear = all(
            np.hypot(x - o.pose.translation[0], y - o.pose.translation[1])
            > o.xy_radius() + 0.06
            for o in scene.objects
        )
        if clear:
            return p
    return np.array([s.center[0], s.center[1], s.height])


@dataclass(frozen=True)
class AttemptRecord:
    seed: int
    target_id: int
    attempt: int
    phase_reached: str
    failure: str = ""
    detection_success: Optional[bool] = None  # selected grasp on the target
    grasp_success: Optional[bool] = None      # mechanical execution success
    task_completed: bool = False
    chosen_grasp_id: int = -1
    chosen_score: float = float("nan")
    n_candidates: int = 0
    n_feasible: int = 0


CSV_HEADER = (
    "seed,target_id,attempt,phase_reached,failure,detection_success,"
    "grasp_success,task_completed,chosen_grasp_id,chosen_score,"
    "n_candidates,n_feasible"
)


def _csv_bool(v: Optional[bool]) -> str:
    return "" if v is None else ("1" if v else "0")


@dataclass
class TrialMetrics:
    attempts: list[AttemptRecord] = field(default_factory=list)
    tasks_total: int = 0
    tasks_succeeded: int = 0

    def failure_counts(self) -> dict[str, int]:
        counts = {fc.value: 0 for fc in FailureClass}
        for a in self.attempts:
            if a.failure:
                counts[a.failure] += 1
        return counts

    @property
    def detection_attempts(self) -> int:
        return sum(1 for a in self.attempts if a.detection_success is not None)

    @property
    def detection_successes(self) -> int:
        return sum(1 for a in self.attempts if a.detection_success)

    @property
    def grasp_attempts(self) -> int:
        return sum(1 for a in self.attempts if a.grasp_success is not None)

    @property
    def grasp_successes(self) -> int:
        return sum(1 for a in self.attempts if a.grasp_success)

    def detection_rate(self) -> float:
        n = self.detection_attempts
        return self.detection_successes / n if n else float("nan")

    def grasp_rate(self) -> float:
        n = self.grasp_attempts
        return self.grasp_successes / n if n else float("nan")

    def task_rate(self) -> float:
        return self.tasks_succeeded / self.tasks_total if self.tasks_total else float("nan")

    def wrong_object_count(self) -> int:
        return self.failure_counts()[FailureClass.WRONG_OBJECT.value]

    def merge(self, other: "TrialMetrics") -> None:
        self.attempts.extend(other.attempts)
        self.tasks_total += other.tasks_total
        self.tasks_succeeded += other.tasks_succeeded

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(CSV_HEADER + "\n")
        for a in self.attempts:
            score = "" if np.isnan(a.chosen_score) else f"{a.chosen_score:.9g}"
            out.write(
                f"{a.seed},{a.target_id},{a.attempt},{a.phase_reached},{a.failure},"
                f"{_csv_bool(a.detection_success)},{_csv_bool(a.grasp_success)},"
                f"{1 if a.task_completed else 0},{a.chosen_grasp_id},{score},"
                f"{a.n_candidates},{a.n_feasible}\n"
            )
        return out.getvalue()


def _advance_perception(session: Session, aim: np.ndarray) -> bool:
    """acquire -> laser -> segment -> grasps -> filter -> plan; False on Failed."""
    for ev, payload in (
        (Event.ACQUIRE, None),
        (Event.SET_LASER, {"point": aim.tolist()}),
        (Event.SEGMENT, None),
        (Event.DETECT_GRASPS, None),
        (Event.FILTER, None),
        (Event.PLAN, None),
    ):
        step(session, ev, payload)
        if session.state.phase == Phase.FAILED:
            return False
    return True


def run_attempt(
    session: Session,
    target_id: int,
    attempt_idx: int,
    place_aim: np.ndarray | None = None,
) -> AttemptRecord:
    """One full pipeline attempt for a target; leaves the session terminal."""
    scene_before = session.scene
    target = scene_before.object_by_id(target_id)
    if session.state.phase != Phase.IDLE:
        step(session, Event.RESET)
    kw = dict(seed=session.seed, target_id=target_id, attempt=attempt_idx)
    if not _advance_perception(session, aim_point(target)):
        return AttemptRecord(
            phase_reached=session.state.phase.value,
            failure=session.state.failure.value,
            n_candidates=len(session.state.candidates),
            n_feasible=len(session.state.feasible),
            **kw,
        )
    if session.state.phase == Phase.AWAITING_SELECTION:
        k = pick_on_target_cluster(session, target_id)
        step(session, Event.SELECT, {"cluster": k})
        if session.state.phase == Phase.FAILED:
            return AttemptRecord(
                phase_reached=Phase.FAILED.value,
                failure=session.state.failure.value,
                n_candidates=len(session.state.candidates),
                n_feasible=len(session.state.feasible),
                **kw,
            )
    st = session.state
    chosen = st.chosen_grasp
    detection = nearest_object_id(session.scene, chosen.base_point) == target_id
    step(session, Event.EXECUTE)
    st = session.state
    grasp_ok = st.outcome.success if st.outcome is not None else False
    task_done = False
    if st.phase == Phase.EXECUTED:
        step(session, Event.FINISH)
        st = session.state
        if st.phase == Phase.PLACE_PENDING:
            if place_aim is None:
                place_aim = place_point_for(
                    session.scene, session._rng("place_aim", session.state.epoch)
                )
            step(session, Event.SET_PLACE, {"point": place_aim.tolist()})
            st = session.state
        task_done = st.phase == Phase.DONE
    return AttemptRecord(
        phase_reached=st.phase.value,
        failure=st.failure.value if st.failure else "",
        detection_success=detection,
        grasp_success=grasp_ok,
        task_completed=task_done,
        chosen_grasp_id=chosen.candidate_id,
        chosen_score=chosen.scores.total,
        n_candidates=len(st.candidates),
        n_feasible=len(st.feasible),
        **kw,
    )


def run_trial(
    seed: int,
    config: PipelineConfig | None = None,
    object_count: int = 6,
    surface: Surface | None = None,
    max_targets: Optional[int] = None,
    scene: Scene | None = None,
) -> TrialMetrics:
    """One seeded scene worked through by the ideal operator.

    Deterministic: equal seeds and configs give byte-identical CSV output.
    """
    config = config if config is not None else PipelineConfig()
    if scene is None:
        scene = sample_scene(seed, object_count, surface_spec=surface)
    session = Session(scene, config, seed=seed)
    order = target_order(scene, seed)
    if max_targets is not None:
        order = order[:max_targets]
    metrics = TrialMetrics()
    for target_id in order:
        metrics.tasks_total += 1
        for attempt in range(1, config.retry_cap + 1):
            rec = run_attempt(session, target_id, attempt)
            metrics.attempts.append(rec)
            if rec.task_completed:
                metrics.tasks_succeeded += 1
                break
            if not any(o.object_id == target_id for o in session.scene.objects):
                break  # target left the scene (e.g. carried off by a wrong grasp)
    return metrics


@dataclass(frozen=True)
class BenchmarkResult:
    metrics: TrialMetrics
    n_trials: int

    def table(self) -> str:
        m = self.metrics
        rows = [
            ("Detection SR", m.detection_successes, m.detection_attempts),
            ("Grasp SR", m.grasp_successes, m.grasp_attempts),
            ("Task SR", m.tasks_succeeded, m.tasks_total),
        ]
        lines = [f"trials: {self.n_trials}"]
        for name, num, den in rows:
            pct = 100.0 * num / den if den else float("nan")
            lines.append(f"{name:<14} {pct:5.1f}% ({num}/{den})")
        lines.append("failure breakdown:")
        total_attempts = len(m.attempts)
        for name, count in m.failure_counts().items():
            pct = 100.0 * count / total_attempts if total_attempts else 0.0
            lines.append(f"  {name:<14} {pct:5.1f}% ({count}/{total_attempts})")
        return "\n".join(lines) + "\n"


def run_benchmark(
    n_trials: int,
    config: PipelineConfig | None = None,
    base_seed: int = 1000,
    object_count: int = 6,
    max_targets: Optional[int] = None,
) -> BenchmarkResult:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    config = config if config is not None else PipelineConfig()
    metrics = TrialMetrics()
    for i in range(n_trials):
        metrics.merge(
            run_trial(
                base_seed + i,
                config,
                object_count=object_count,
                max_targets=max_targets,
            )
        )
    return BenchmarkResult(metrics=metrics, n_trials=n_trials)


@dataclass(frozen=True)
class ABResult:
    scenes: int
    wrong_auto: int
    wrong_manual: int
    records: tuple[tuple[int, bool, bool], ...]  # (seed, auto_wrong, manual_wrong)

    def table(self) -> str:
        return (
            f"adjacency scenes: {self.scenes}\n"
            f"wrong-object selections, automatic: {self.wrong_auto}\n"
            f"wrong-object selections, manual:    {self.wrong_manual}\n"
        )


def _selection_wrong(session: Session, target_id: int) -> bool | None:
    """None if no selection was committed; else wrong-object flag."""
    if session.state.chosen_grasp is None:
        return None
    return nearest_object_id(session.scene, session.state.chosen_grasp.base_point) != target_id


def run_ab_comparison(
    n_scenes: int,
    base_seed: int = 5000,
    config: PipelineConfig | None = None,
) -> ABResult:
    """Same adjacency scenes run under automatic and manual selection.

    One attempt per mode per scene; counts committed wrong-object selections.
    """
    base_cfg = config if config is not None else PipelineConfig()
    wrong_auto = 0
    wrong_manual = 0
    records = []
    for i in range(n_scenes):
        seed = base_seed + i
        scene = sample_adjacent_pair(seed)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAB]))
        target_id = int(rng.integers(1, 3))
        row = [seed, False, False]
        for mode_idx, selection in enumerate(("automatic", "manual")):
            cfg = replace(base_cfg, selection=selection)
            session = Session(scene, cfg, seed=seed)
            ok = _advance_perception(
                session, aim_point(scene.object_by_id(target_id))
            )
            if ok and session.state.phase == Phase.AWAITING_SELECTION:
                k = pick_on_target_cluster(session, target_id)
                step(session, Event.SELECT, {"cluster": k})
            wrong = _selection_wrong(session, target_id)
            if wrong:
                if selection == "automatic":
                    wrong_auto += 1
                else:
                    wrong_manual += 1
                row[1 + mode_idx] = True
        records.append(tuple(row))
    return ABResult(
        scenes=n_scenes,
        wrong_auto=wrong_auto,
        wrong_manual=wrong_manual,
        records=tuple(records),
    )
