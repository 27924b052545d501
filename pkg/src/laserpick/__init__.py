"""laserpick: desk-scale simulation of a laser-guided semi-autonomous
pick-and-place pipeline (synthetic five-sensor perception, laser target
detection, grasp generation and scoring, motion feasibility, projector
feedback, and an interactive session service)."""

from .cloud import PointCloud, load_ply, merge_clouds, save_ply, transform_cloud
from .geometry import Pose
from .robot import ArmModel, GraspCandidate, GripperModel
from .scene import Scene, sample_scene
from .session import (
    Event,
    FailureClass,
    Phase,
    PipelineConfig,
    Session,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "Event",
    "FailureClass",
    "GraspCandidate",
    "GripperModel",
    "Phase",
    "PipelineConfig",
    "PointCloud",
    "Pose",
    "Scene",
    "Session",
    "load_ply",
    "merge_clouds",
    "sample_scene",
    "save_ply",
    "step",
    "transform_cloud",
]
