"""Core domain types: embeddings, gallery, gates, boxes.

All types here are immutable after construction and safe to share between
threads. Matching works purely on unit-length embedding vectors; image pixels
are carried opaquely elsewhere and never interpreted.

Gallery entries hold one to three pose embeddings per person (front, angled,
side) so that a walker glancing away from the camera can still match on any
single pose.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DimensionMismatch, GalleryInvalid, ZeroVector

DEFAULT_DIMENSION = 128

# Type alias: person ids are opaque unique strings (UUID-format recommended).
PersonId = str


class PoseKind(Enum):
    FRONT = "front"
    ANGLED = "angled"
    SIDE = "side"


class EnrollmentSource(Enum):
    LIVE_CAPTURE = "live_capture"
    DOCUMENT_SCAN = "document_scan"


class GateRole(Enum):
    ENTRY = "entry"
    EXIT = "exit"


class Occlusion(Enum):
    NONE = "none"
    MASK = "mask"
    CAP = "cap"
    SPECTACLES = "spectacles"


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension face signature, unit L2 norm by construction.

    The constructor is deliberately permissive (validation lives in
    validate_gallery and normalize) so that invalid persisted data can be
    loaded, inspected, and reported rather than crash on read.
    """

    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    def is_unit(self, tol: float = 1e-6) -> bool:
        return all(math.isfinite(v) for v in self.values) and abs(self.norm() - 1.0) <= tol


def normalize(values: Sequence[float], dim: int | None = None) -> Embedding:
    """Scale a vector to unit L2 norm.

    Raises DimensionMismatch when dim is given and differs from len(values),
    ZeroVector when the norm is below 1e-12.
    """
    vals = tuple(float(v) for v in values)
    if dim is not None and len(vals) != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ZeroVector("vector has non-finite components")
    norm = math.sqrt(math.fsum(v * v for v in vals))
    if norm < 1e-12:
        raise ZeroVector("cannot normalize a zero vector")
    return Embedding(tuple(v / norm for v in vals))


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1] against rounding."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def fits_within(self, width: int, height: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.w > 0
            and self.h > 0
            and self.x + self.w <= width
            and self.y + self.h <= height
        )


@dataclass(frozen=True)
class GalleryEntry:
    person_id: PersonId
    display_name: str
    poses: tuple[tuple[PoseKind, Embedding], ...]
    enrolled_at: int  # ms since epoch
    source: EnrollmentSource = EnrollmentSource.LIVE_CAPTURE

    def pose(self, kind: PoseKind) -> Embedding | None:
        for k, emb in self.poses:
            if k is kind:
                return emb
        return None


@dataclass(frozen=True)
class Gallery:
    """Immutable snapshot of the enrolled-attendee database."""

    dimension: int = DEFAULT_DIMENSION
    entries: Mapping[PersonId, GalleryEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def with_entry(self, entry: GalleryEntry) -> "Gallery":
        """New snapshot with one entry added (strictly validated)."""
        return build_gallery(self.dimension, list(self.entries.values()) + [entry])


@dataclass(frozen=True)
class Violation:
    person_id: PersonId | None
    code: str
    detail: str

    def __str__(self) -> str:
        who = self.person_id if self.person_id is not None else "<gallery>"
        return f"{who}: {self.code} ({self.detail})"


def validate_entries(dimension: int, entries: Iterable[GalleryEntry]) -> list[Violation]:
    """Report every gallery invariant violation; an empty list means valid."""
    violations: list[Violation] = []
    if dimension <= 0:
        violations.append(Violation(None, "dimension", f"dimension must be positive, got {dimension}"))
    seen: set[PersonId] = set()
    for entry in entries:
        pid = entry.person_id
        if not pid:
            violations.append(Violation(pid, "empty person id", "person_id must be non-empty"))
        if pid in seen:
            violations.append(Violation(pid, "duplicate id", "person_id occurs more than once"))
        seen.add(pid)
        if not 1 <= len(entry.poses) <= 3:
            violations.append(Violation(pid, "pose count", f"expected 1-3 poses, got {len(entry.poses)}"))
        kinds = [k for k, _ in entry.poses]
        if len(set(kinds)) != len(kinds):
            violations.append(Violation(pid, "duplicate pose kind", "pose kinds must be distinct"))
        for kind, emb in entry.poses:
            if emb.dim != dimension:
                violations.append(
                    Violation(pid, "dimension mismatch", f"{kind.value} pose has dim {emb.dim}, gallery is {dimension}")
                )
            elif not emb.is_unit():
                violations.append(
                    Violation(pid, "non-unit pose", f"{kind.value} pose norm is {emb.norm():.6g}")
                )
    return violations


def validate_gallery(gallery: Gallery) -> list[Violation]:
    return validate_entries(gallery.dimension, gallery.entries.values())


def build_gallery(dimension: int, entries: Sequence[GalleryEntry]) -> Gallery:
    """Construct a Gallery under strict checking; raises GalleryInvalid."""
    violations = validate_entries(dimension, entries)
    if violations:
        raise GalleryInvalid(violations)
    return Gallery(dimension=dimension, entries={e.person_id: e for e in entries})


# -- persistence -------------------------------------------------------------
#
# Gallery file format: a single JSON document
#   {"dimension": D, "entries": [{"person_id", "display_name",
#    "poses": [{"kind", "embedding": [...]}], "enrolled_at", "source"}]}


def gallery_to_json(gallery: Gallery) -> dict:
    return {
        "dimension": gallery.dimension,
        "entries": [
            {
                "person_id": e.person_id,
                "display_name": e.display_name,
                "poses": [
                    {"kind": kind.value, "embedding": list(emb.values)}
                    for kind, emb in e.poses
                ],
                "enrolled_at": e.enrolled_at,
                "source": e.source.value,
            }
            for e in gallery.entries.values()
        ],
    }


def gallery_from_json(doc: dict) -> Gallery:
    try:
        dimension = int(doc["dimension"])
        entries = []
        for raw in doc["entries"]:
            poses = tuple(
                (PoseKind(p["kind"]), Embedding(tuple(float(v) for v in p["embedding"])))
                for p in raw["poses"]
            )
            entries.append(
                GalleryEntry(
                    person_id=str(raw["person_id"]),
                    display_name=str(raw["display_name"]),
                    poses=poses,
                    enrolled_at=int(raw["enrolled_at"]),
                    source=EnrollmentSource(raw.get("source", "live_capture")),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise GalleryInvalid([Violation(None, "schema", str(exc))]) from exc
    return build_gallery(dimension, entries)


def save_gallery(gallery: Gallery, path: str | Path) -> None:
    Path(path).write_text(json.dumps(gallery_to_json(gallery), indent=2) + "\n", encoding="utf-8")


def load_gallery(path: str | Path) -> Gallery:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GalleryInvalid([Violation(None, "schema", f"not valid JSON: {exc}")]) from exc
    return gallery_from_json(doc)
