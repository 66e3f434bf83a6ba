"""Desk-scale gate-camera attendance pipeline."""

from .clock import Clock, VirtualClock, WallClock
from .config import PipelineConfig, load_config
from .frames import FaceObservation, Frame
from .ledger import Appearance, AttendanceRecord, PruneWindow, prune
from .model import (
    BoundingBox,
    Embedding,
    Gallery,
    GalleryEntry,
    GateRole,
    PoseKind,
    build_gallery,
    cosine_similarity,
    load_gallery,
    normalize,
    save_gallery,
    validate_gallery,
)
from .recognition import (
    Detection,
    MatcherConfig,
    MatchResult,
    Recognized,
    RecognitionRow,
    ReferenceBackend,
    Unknown,
    match_face,
    recognize_frame,
)
from .runtime import Runtime
from .scenario import FrameStream, ScenarioKind, ScenarioSpec, generate_scenario, make_gallery

__version__ = "0.1.0"

__all__ = [
    "Appearance",
    "AttendanceRecord",
    "BoundingBox",
    "Clock",
    "Detection",
    "Embedding",
    "FaceObservation",
    "Frame",
    "FrameStream",
    "Gallery",
    "GalleryEntry",
    "GateRole",
    "MatchResult",
    "MatcherConfig",
    "PipelineConfig",
    "PoseKind",
    "PruneWindow",
    "Recognized",
    "RecognitionRow",
    "ReferenceBackend",
    "Runtime",
    "ScenarioKind",
    "ScenarioSpec",
    "Unknown",
    "VirtualClock",
    "WallClock",
    "build_gallery",
    "cosine_similarity",
    "generate_scenario",
    "load_config",
    "load_gallery",
    "make_gallery",
    "match_face",
    "normalize",
    "prune",
    "recognize_frame",
    "save_gallery",
    "validate_gallery",
]
