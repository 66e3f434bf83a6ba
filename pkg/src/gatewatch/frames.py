"""Camera frame payloads.

A Frame is what a gate camera emits: a header (camera, gate role, sequence
number, capture timestamp, dimensions) plus zero or more face observations.
Observations carry a pre-extracted embedding; pixel snapshots ride along as
opaque bytes for the security console only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import BoundingBox, Embedding, GateRole, Occlusion, PersonId

DEFAULT_FRAME_WIDTH = 400
DEFAULT_FRAME_HEIGHT = 300


@dataclass(frozen=True)
class FaceObservation:
    bbox: BoundingBox
    embedding: Embedding
    yaw_deg: float = 0.0
    occlusion: Occlusion = Occlusion.NONE
    # Simulation ground truth; never consumed by matching.
    truth_label: PersonId | None = None


@dataclass(frozen=True)
class Frame:
    camera_id: str
    gate: GateRole
    seq: int
    capture_ts: int  # ms since epoch
    width: int = DEFAULT_FRAME_WIDTH
    height: int = DEFAULT_FRAME_HEIGHT
    observations: tuple[FaceObservation, ...] = ()
    snapshot: bytes | None = None
