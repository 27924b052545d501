"""Interactive session service over HTTP.

One active session per instance (create replaces it); readers see immutable
state snapshots.  Posting a laser target drives perception through planning
in one go; manual selection pauses at AwaitingSelection for toggle /
select / confirm.  State changes stream as events (poll ``/events`` with
``since`` or subscribe to ``/events/stream``).

All geometry is meters, world frame.  See README for the message schema.
"""

from __future__ import annotations

import base64
import json
import secrets
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .harness import aim_point, target_order
from .projector import save_pgm
from .scene import Scene, load_scene, sample_scene
from .session import (
    Event,
    IllegalTransition,
    Phase,
    PipelineConfig,
    Session,
    step,
)

DECIMATE_DEFAULT = 50_000


class CreateSessionRequest(BaseModel):
    scene_seed: int = 0
    object_count: int = 6
    seed: int = 0
    mode: str = "pick_drop"
    selection: str = "automatic"
    scene_file: Optional[str] = None


class LaserRequest(BaseModel):
    point: Optional[list[float]] = None
    sensor: Optional[int] = None
    pixel: Optional[list[float]] = None


class SelectRequest(BaseModel):
    cluster: int = Field(ge=0)


class PlaceRequest(BaseModel):
    point: list[float]


def _pose_json(pose) -> dict:
    return {
        "rotation": pose.rotation.tolist(),
        "translation": pose.translation.tolist(),
    }


def _state_json(session: Session) -> dict:
    st = session.state
    return {
        "phase": st.phase.value,
        "failure": st.failure.value if st.failure else None,
        "mode": session.config.mode,
        "selection": session.config.selection,
        "epoch": st.epoch,
        "n_points": 0 if st.fused is None else len(st.fused),
        "laser_target": (
            None
            if st.laser_target is None
            else {
                "position": st.laser_target.position.tolist(),
                "confidence": st.laser_target.confidence,
            }
        ),
        "n_candidates": len(st.candidates),
        "n_feasible": len(st.feasible),
        "n_clusters": len(st.clusters),
        "selected_cluster": st.selected_cluster,
        "chosen_grasp": (
            None if st.chosen_grasp is None else st.chosen_grasp.candidate_id
        ),
        "place_pose": None if st.place_pose is None else _pose_json(st.place_pose),
        "timings": dict(session.timings),
        "event_seq": len(session.events),
    }


def _cluster_json(session: Session) -> list[dict]:
    out = []
    for k, cl in enumerate(session.state.clusters):
        best = cl.best
        s = best.scores
        out.append(
            {
                "index": k,
                "size": len(cl.members),
                "grasp_id": best.candidate_id,
                "position": best.position.tolist(),
                "approach": best.approach.tolist(),
                "axis": best.axis.tolist(),
                "width": best.width,
                "scores": {
                    "width": s.width,
                    "joint": s.joint,
                    "approach": s.approach,
                    "segment": s.segment,
                    "laser": s.laser,
                    "total": s.total,
                },
            }
        )
    return out


def _decimate(points: np.ndarray, max_points: int) -> np.ndarray:
    if len(points) <= max_points:
        return points
    stride = int(np.ceil(len(points) / max_points))
    return points[::stride]


class ServiceState:
    def __init__(self, scene_factory=None):
        self.lock = threading.Lock()
        self.session: Optional[Session] = None
        self.session_id: Optional[str] = None
        self.scene_factory = scene_factory
        self.event_cond = threading.Condition(self.lock)


def create_app(scene: Scene | None = None) -> FastAPI:
    """App factory; a preset scene (e.g. from a file) overrides scene_seed."""
    app = FastAPI(title="laserpick session service")
    svc = ServiceState()

    def get_session(sid: str) -> Session:
        if svc.session is None or svc.session_id != sid:
            raise HTTPException(status_code=404, detail="unknown session")
        return svc.session

    def drive(session: Session, events: list[tuple[Event, dict | None]]):
        """Apply events until one fails or a terminal/interactive phase."""
        for ev, payload in events:
            try:
                with svc.lock:
                    step(session, ev, payload)
                    svc.event_cond.notify_all()
            except IllegalTransition as e:
                raise HTTPException(
                    status_code=409,
                    detail={"error": str(e), "phase": session.state.phase.value},
                )
            if session.state.phase == Phase.FAILED:
                break

    @app.post("/session")
    def create_session(req: CreateSessionRequest):
        config = PipelineConfig(mode=req.mode, selection=req.selection)
        if scene is not None:
            scn = scene
        elif req.scene_file:
            scn = load_scene(req.scene_file)
        else:
            scn = sample_scene(req.scene_seed, req.object_count)
        with svc.lock:
            svc.session = Session(scn, config, seed=req.seed)
            svc.session_id = secrets.token_hex(8)
            svc.event_cond.notify_all()
        return {
            "session_id": svc.session_id,
            "state": _state_json(svc.session),
            "suggested_targets": target_order(scn, req.seed),
        }

    @app.get("/session/{sid}/state")
    def get_state(sid: str):
        return _state_json(get_session(sid))

    @app.get("/session/{sid}/cloud")
    def get_cloud(sid: str, max_points: int = DECIMATE_DEFAULT):
        session = get_session(sid)
        st = session.state
        if st.fused is None:
            return {"points": [], "frame": "world"}
        pts = _decimate(st.fused.points, max_points)
        return {"points": np.round(pts, 5).tolist(), "frame": st.fused.frame}

    @app.get("/session/{sid}/segment")
    def get_segment(sid: str):
        session = get_session(sid)
        seg = session.state.segment
        if seg is None:
            return {"points": [], "provenance": None}
        return {
            "points": np.round(seg.cloud.points, 5).tolist(),
            "provenance": seg.provenance,
        }

    @app.get("/session/{sid}/clusters")
    def get_clusters(sid: str):
        return {"clusters": _cluster_json(get_session(sid))}

    @app.get("/session/{sid}/dsar")
    def get_dsar(sid: str):
        import io
        import tempfile

        session = get_session(sid)
        try:
            mask = session.dsar_mask()
        except ValueError as e:
            raise HTTPException(status_code=409, detail=str(e))
        buf = io.BytesIO()
        h, w = mask.shape
        buf.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        buf.write(np.where(mask, 255, 0).astype(np.uint8).tobytes())
        return {
            "width": w,
            "height": h,
            "format": "pgm",
            "data": base64.b64encode(buf.getvalue()).decode("ascii"),
        }

    @app.post("/session/{sid}/laser")
    def post_laser(sid: str, req: LaserRequest):
        session = get_session(sid)
        if req.point is not None:
            payload = {"point": req.point}
        elif req.sensor is not None and req.pixel is not None:
            payload = {"sensor": req.sensor, "pixel": req.pixel}
        else:
            raise HTTPException(status_code=400, detail="need point or sensor+pixel")
        events: list[tuple[Event, dict | None]] = []
        if session.state.phase == Phase.IDLE:
            events.append((Event.ACQUIRE, None))
        events.append((Event.SET_LASER, payload))
        events.extend(
            [
                (Event.SEGMENT, None),
                (Event.DETECT_GRASPS, None),
                (Event.FILTER, None),
                (Event.PLAN, None),
            ]
        )
        drive(session, events)
        if (
            session.config.selection == "automatic"
            and session.state.phase == Phase.PLANNED
        ):
            drive(session, [(Event.EXECUTE, None)])
            if session.state.phase == Phase.EXECUTED:
                drive(session, [(Event.FINISH, None)])
        return _state_json(session)

    @app.post("/session/{sid}/toggle")
    def post_toggle(sid: str):
        session = get_session(sid)
        drive(session, [(Event.TOGGLE, None)])
        return _state_json(session)

    @app.post("/session/{sid}/select")
    def post_select(sid: str, req: SelectRequest):
        session = get_session(sid)
        if req.cluster >= len(session.state.clusters):
            raise HTTPException(status_code=400, detail="cluster index out of range")
        drive(session, [(Event.SELECT, {"cluster": req.cluster})])
        return _finish_after_selection(session)

    @app.post("/session/{sid}/confirm")
    def post_confirm(sid: str):
        session = get_session(sid)
        drive(session, [(Event.CONFIRM, None)])
        return _finish_after_selection(session)

    def _finish_after_selection(session: Session):
        if session.state.phase == Phase.PLANNED:
            drive(session, [(Event.EXECUTE, None)])
            if session.state.phase == Phase.EXECUTED:
                drive(session, [(Event.FINISH, None)])
        return _state_json(session)

    @app.post("/session/{sid}/place")
    def post_place(sid: str, req: PlaceRequest):
        session = get_session(sid)
        drive(session, [(Event.SET_PLACE, {"point": req.point})])
        return _state_json(session)

    @app.post("/session/{sid}/reset")
    def post_reset(sid: str):
        session = get_session(sid)
        drive(session, [(Event.RESET, None)])
        return _state_json(session)

    @app.get("/session/{sid}/events")
    def get_events(sid: str, since: int = 0):
        session = get_session(sid)
        events = session.events[since:]
        return {"events": events, "next": since + len(events)}

    @app.get("/session/{sid}/events/stream")
    def stream_events(sid: str):
        session = get_session(sid)

        def gen():
            sent = 0
            while True:
                with svc.lock:
                    if svc.session is not session:
                        return
                    pending = session.events[sent:]
                    if not pending:
                        svc.event_cond.wait(timeout=15.0)
                        pending = session.events[sent:]
                for ev in pending:
                    yield f"data: {json.dumps(ev)}\n\n"
                sent += len(pending)
                terminal = session.state.phase in (Phase.DONE, Phase.FAILED)
                if terminal and sent >= len(session.events):
                    return

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    return app
