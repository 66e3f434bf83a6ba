"""Recognition backends: turn frames into recognition rows or unknown sightings.

The reference backend matches observation embeddings against the gallery by
cosine similarity, aggregating a person's poses by max so that any one pose
may carry the match. A RemoteBackend slot preserves the seam for an external
recognition service without shipping one.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MalformedFrame, NotConfigured
from .frames import FaceObservation, Frame
from .model import Embedding, Gallery, GateRole, PersonId


@dataclass(frozen=True)
class Detection:
    observation: FaceObservation
    frame_seq: int
    camera_id: str
    capture_ts: int


@dataclass(frozen=True)
class Recognized:
    person_id: PersonId
    similarity: float


@dataclass(frozen=True)
class Unknown:
    best_similarity: float
    best_person: PersonId | None


MatchResult = Recognized | Unknown

# Sentinel best_similarity for a match against an empty gallery.
EMPTY_GALLERY_SIMILARITY = -1.0


@dataclass(frozen=True)
class RecognitionRow:
    ts: int
    camera_id: str
    gate: GateRole
    person_id: PersonId
    display_name: str
    similarity: float
    frame_seq: int


@dataclass(frozen=True)
class MatcherConfig:
    threshold: float = 0.75

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")


def detect_faces(frame: Frame) -> list[Detection]:
    """One Detection per observation, order preserved, header fields copied."""
    detections = []
    for obs in frame.observations:
        if not isinstance(obs, FaceObservation) or obs.embedding is None:
            raise MalformedFrame(f"observation without embedding in frame seq {frame.seq}")
        if not isinstance(obs.embedding, Embedding) or obs.embedding.dim == 0:
            raise MalformedFrame(f"observation embedding malformed in frame seq {frame.seq}")
        detections.append(
            Detection(
                observation=obs,
                frame_seq=frame.seq,
                camera_id=frame.camera_id,
                capture_ts=frame.capture_ts,
            )
        )
    return detections


class _GalleryIndex:
    """Pose matrix over one gallery snapshot for batched similarity scoring."""

    def __init__(self, gallery: Gallery):
        self.gallery = gallery
        self.person_ids: list[PersonId] = []
        rows = []
        owners = []
        for pid in sorted(gallery.entries):
            entry = gallery.entries[pid]
            self.person_ids.append(pid)
            for _, emb in entry.poses:
                rows.append(emb.values)
                owners.append(pid)
        self._owners = owners
        self._matrix = np.asarray(rows, dtype=np.float64) if rows else None

    def best_match(self, embedding: Embedding) -> tuple[PersonId | None, float]:
        """Best person by max-over-poses score; ties go to the smallest id."""
        if self._matrix is None:
            return None, EMPTY_GALLERY_SIMILARITY
        if embedding.dim != self._matrix.shape[1]:
            raise DimensionMismatch(
                f"detection dim {embedding.dim} vs gallery dim {self._matrix.shape[1]}"
            )
        sims = self._matrix @ np.asarray(embedding.values, dtype=np.float64)
        best_pid: PersonId | None = None
        best_score = -math.inf
        scores: dict[PersonId, float] = {}
        for owner, sim in zip(self._owners, sims):
            s = float(sim)
            if owner not in scores or s > scores[owner]:
                scores[owner] = s
        # person_ids is sorted, so the first strict max wins ties lexicographically
        for pid in self.person_ids:
            if scores[pid] > best_score:
                best_score = scores[pid]
                best_pid = pid
        return best_pid, max(-1.0, min(1.0, best_score))


class ReferenceBackend:
    """In-process embedding matcher over an immutable gallery snapshot.

    Read-only and therefore safe for concurrent frame processing; gallery
    updates are handled by swapping in a whole new backend snapshot.
    """

    def __init__(self, gallery: Gallery, config: MatcherConfig | None = None):
        self.config = config or MatcherConfig()
        self._index = _GalleryIndex(gallery)

    @property
    def gallery(self) -> Gallery:
        return self._index.gallery

    def detect(self, frame: Frame) -> list[Detection]:
        return detect_faces(frame)

    def match(self, detection: Detection) -> MatchResult:
        best_pid, best_score = self._index.best_match(detection.observation.embedding)
        if best_pid is not None and best_score >= self.config.threshold:
            return Recognized(person_id=best_pid, similarity=best_score)
        return Unknown(best_similarity=best_score, best_person=best_pid)

    def recognize_frame(self, frame: Frame) -> tuple[list[RecognitionRow], list[Detection]]:
        """Split a frame's observations into recognition rows and unknowns.

        Rows and unknowns always partition the frame's observations.
        """
        rows: list[RecognitionRow] = []
        unknowns: list[Detection] = []
        for detection in self.detect(frame):
            result = self.match(detection)
            if isinstance(result, Recognized):
                entry = self.gallery.entries[result.person_id]
                rows.append(
                    RecognitionRow(
                        ts=frame.capture_ts,
                        camera_id=frame.camera_id,
                        gate=frame.gate,
                        person_id=result.person_id,
                        display_name=entry.display_name,
                        similarity=result.similarity,
                        frame_seq=frame.seq,
                    )
                )
            else:
                unknowns.append(detection)
        return rows, unknowns


def match_face(detection: Detection, gallery: Gallery, config: MatcherConfig | None = None) -> MatchResult:
    return ReferenceBackend(gallery, config).match(detection)


def recognize_frame(
    frame: Frame, gallery: Gallery, config: MatcherConfig | None = None
) -> tuple[list[RecognitionRow], list[Detection]]:
    return ReferenceBackend(gallery, config).recognize_frame(frame)


class GalleryStore:
    """Holds the current gallery and matcher; swaps are atomic.

    Readers take whole backend snapshots, so frames in flight finish against
    the gallery they started with while registration publishes a new one.
    """

    def __init__(self, gallery: Gallery, config: MatcherConfig | None = None, backend: str = "reference"):
        self._config = config or MatcherConfig()
        self._backend_name = backend
        self._lock = threading.Lock()
        self._current = create_backend(backend, gallery, self._config)

    def snapshot(self) -> ReferenceBackend:
        with self._lock:
            return self._current

    def gallery(self) -> Gallery:
        return self.snapshot().gallery

    def swap(self, gallery: Gallery) -> None:
        backend = create_backend(self._backend_name, gallery, self._config)
        with self._lock:
            self._current = backend

    def add_entry(self, entry) -> None:
        with self._lock:
            gallery = self._current.gallery.with_entry(entry)
            self._current = create_backend(self._backend_name, gallery, self._config)


class RemoteBackend:
    """Interface slot for an external recognition service; not configured here."""

    def __init__(self, *args, **kwargs):
        raise NotConfigured("remote recognition backend requires service credentials")


BACKENDS = {
    "reference": ReferenceBackend,
    "remote": RemoteBackend,
}


def create_backend(name: str, gallery: Gallery, config: MatcherConfig | None = None):
    try:
        factory = BACKENDS[name]
    except KeyError:
        raise NotConfigured(f"unknown backend {name!r}; expected one of {sorted(BACKENDS)}")
    return factory(gallery, config)
