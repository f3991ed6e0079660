"""Tracking and counting spherical fruits in calibrated image sequences."""

from .geometry import BoundingBox, CameraMatrix, camera_center, dlt_triangulate, iou, project
from .assignment import associate_boxes, solve_assignment
from .sphere import RansacParams, SphereEstimate, estimate_orange, ransac_triangulation, reproject_sphere
from .tracker import FrameDetections, Track, TrackerConfig, TrackingResult, TrackState, degrade_detections, run
from .metrics import HotaReport, LabeledBox, hota, mota
from .simulator import SceneConfig, generate_scene

__all__ = [
    "BoundingBox",
    "CameraMatrix",
    "FrameDetections",
    "HotaReport",
    "LabeledBox",
    "RansacParams",
    "SceneConfig",
    "SphereEstimate",
    "Track",
    "TrackState",
    "TrackerConfig",
    "TrackingResult",
    "associate_boxes",
    "camera_center",
    "degrade_detections",
    "dlt_triangulate",
    "estimate_orange",
    "generate_scene",
    "hota",
    "iou",
    "mota",
    "project",
    "ransac_triangulation",
    "reproject_sphere",
    "run",
    "solve_assignment",
]
