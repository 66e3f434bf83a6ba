"""Deterministic walkthrough scenario generator and stream persistence.

Replaces physical gate cameras for desk-scale experiments: given a gallery and
a scenario spec, emits a time-ordered frame stream in which enrolled walkers
carry noisy versions of their own front pose and uninvited walkers carry
vectors kept dissimilar from every enrolled pose by rejection sampling.

The observation noise grows with head yaw: no penalty inside 30 degrees, then
a linear ramp up to 3x at 90 degrees, which reproduces the qualitative
side-face degradation the system is evaluated against. All draws come from a
single seeded generator, so equal (spec, gallery, seed) produce byte-identical
encoded streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import MalformedPayload, UnknownParticipant
from .frames import DEFAULT_FRAME_HEIGHT, DEFAULT_FRAME_WIDTH, FaceObservation, Frame
from .model import BoundingBox, Embedding, EnrollmentSource, Gallery, GalleryEntry, GateRole, Occlusion, PersonId, PoseKind, build_gallery, normalize
from .wire import decode_frame_prefix, encode_frame

DEFAULT_NOISE_SIGMA = 0.03
DEFAULT_FPS = 5
WALK_DURATION_RANGE_MS = (6000, 8000)

# Tiny constant 8x8 grey PNG used when the emulator is asked for snapshots.
_PLACEHOLDER_PNG = bytes.fromhex(
    "89504e470d0a1a0a0000000d4948445200000008000000080800000000e164e157"
    "0000000d4944415478da63648080ff1f00030301ff43cdb6220000000049454e44ae426082"
)


class ScenarioKind(Enum):
    SINGLE_PERSON = "single_person"
    GROUP_SAME_DISTANCE = "group_same_distance"
    GROUP_NEAR_FAR = "group_near_far"
    LOOKALIKES = "lookalikes"
    MASKED = "masked"
    SIDE_FACE = "side_face"


def yaw_penalty(yaw_deg: float) -> float:
    """0 below 30 degrees, then linear up to 3.0 at 90 degrees."""
    a = abs(yaw_deg)
    if a < 30.0:
        return 0.0
    return 3.0 * (min(a, 90.0) - 30.0) / 60.0


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    participants: tuple[PersonId, ...]
    rng_seed: int = 0
    fps: int = DEFAULT_FPS
    walk_duration_ms: int | None = None  # None: drawn uniformly from [6000, 8000]
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    yaw_profile: Mapping[PersonId, tuple[float, ...]] | None = None
    uninvited: tuple[PersonId, ...] = ()
    camera_id: str = "cam-entry"
    gate: GateRole = GateRole.ENTRY
    start_ts: int = 0
    match_threshold: float = 0.75  # uninvited rejection margin is threshold - 0.1
    occlusion_noise_scale: float = 1.5
    far_noise_scale: float = 1.5
    with_snapshots: bool = False

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.walk_duration_ms is not None and self.walk_duration_ms <= 0:
            raise ValueError(f"walk_duration_ms must be positive, got {self.walk_duration_ms}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class PresentPerson:
    person_id: PersonId
    yaw_deg: float
    uninvited: bool


@dataclass(frozen=True)
class FrameTruth:
    seq: int
    ts: int
    present: tuple[PresentPerson, ...]


@dataclass(frozen=True)
class PresenceInterval:
    person_id: PersonId
    first_ts: int
    last_ts: int
    uninvited: bool


@dataclass(frozen=True)
class StreamManifest:
    kind: ScenarioKind
    camera_id: str
    gate: GateRole
    fps: int
    walk_duration_ms: int
    noise_sigma: float
    rng_seed: int
    start_ts: int
    participants: tuple[PersonId, ...]
    uninvited: tuple[PersonId, ...]
    intervals: tuple[PresenceInterval, ...]
    frames: tuple[FrameTruth, ...]


@dataclass(frozen=True)
class FrameStream:
    frames: tuple[Frame, ...]
    manifest: StreamManifest


def generate_scenario(spec: ScenarioSpec, gallery: Gallery) -> FrameStream:
    rng = np.random.default_rng(spec.rng_seed)
    uninvited = set(spec.uninvited)
    for pid in spec.participants:
        if pid not in gallery.entries and pid not in uninvited:
            raise UnknownParticipant(pid)

    duration = spec.walk_duration_ms
    if duration is None:
        duration = int(rng.integers(WALK_DURATION_RANGE_MS[0], WALK_DURATION_RANGE_MS[1] + 1))

    bases = _walker_bases(spec, gallery, rng)
    frame_count = math.ceil(duration * spec.fps / 1000)
    boxes = _layout_boxes(spec, rng)

    frames: list[Frame] = []
    truths: list[FrameTruth] = []
    for i in range(frame_count):
        ts = spec.start_ts + (i * 1000) // spec.fps
        observations = []
        present = []
        for p_idx, pid in enumerate(spec.participants):
            yaw = _yaw_at(spec, pid, i, frame_count)
            occlusion = Occlusion.MASK if spec.kind is ScenarioKind.MASKED else Occlusion.NONE
            sigma = spec.noise_sigma * (1.0 + yaw_penalty(yaw))
            if occlusion is Occlusion.MASK:
                sigma *= spec.occlusion_noise_scale
            if spec.kind is ScenarioKind.GROUP_NEAR_FAR and _is_far(p_idx, len(spec.participants)):
                sigma *= spec.far_noise_scale
            embedding = _noisy_embedding(bases[pid], sigma, rng)
            observations.append(
                FaceObservation(
                    bbox=boxes[p_idx],
                    embedding=embedding,
                    yaw_deg=yaw,
                    occlusion=occlusion,
                    truth_label=pid,
                )
            )
            present.append(PresentPerson(person_id=pid, yaw_deg=yaw, uninvited=pid in uninvited))
        frames.append(
            Frame(
                camera_id=spec.camera_id,
                gate=spec.gate,
                seq=i,
                capture_ts=ts,
                observations=tuple(observations),
                snapshot=_PLACEHOLDER_PNG if spec.with_snapshots else None,
            )
        )
        truths.append(FrameTruth(seq=i, ts=ts, present=tuple(present)))

    first_ts = spec.start_ts
    last_ts = truths[-1].ts if truths else spec.start_ts
    intervals = tuple(
        PresenceInterval(person_id=pid, first_ts=first_ts, last_ts=last_ts, uninvited=pid in uninvited)
        for pid in spec.participants
    )
    manifest = StreamManifest(
        kind=spec.kind,
        camera_id=spec.camera_id,
        gate=spec.gate,
        fps=spec.fps,
        walk_duration_ms=duration,
        noise_sigma=spec.noise_sigma,
        rng_seed=spec.rng_seed,
        start_ts=spec.start_ts,
        participants=spec.participants,
        uninvited=spec.uninvited,
        intervals=intervals,
        frames=tuple(truths),
    )
    return FrameStream(frames=tuple(frames), manifest=manifest)


def _walker_bases(spec: ScenarioSpec, gallery: Gallery, rng: np.random.Generator) -> dict[PersonId, Embedding]:
    """Front pose for enrolled walkers; rejection-sampled vectors for uninvited."""
    reject_above = spec.match_threshold - 0.1
    pose_matrix = None
    rows = [emb.values for e in gallery.entries.values() for _, emb in e.poses]
    if rows:
        pose_matrix = np.asarray(rows, dtype=np.float64)

    bases: dict[PersonId, Embedding] = {}
    for pid in spec.participants:
        entry = gallery.entries.get(pid)
        if entry is not None:
            front = entry.pose(PoseKind.FRONT) or entry.poses[0][1]
            bases[pid] = front
            continue
        for _ in range(1000):
            candidate = rng.standard_normal(gallery.dimension)
            candidate /= np.linalg.norm(candidate)
            if pose_matrix is None or float(np.max(pose_matrix @ candidate)) < reject_above:
                bases[pid] = Embedding(tuple(float(v) for v in candidate))
                break
        else:
            raise UnknownParticipant(
                f"could not sample an uninvited vector for {pid!r} dissimilar to the gallery"
            )
    return bases


def _noisy_embedding(base: Embedding, sigma: float, rng: np.random.Generator) -> Embedding:
    if sigma == 0.0:
        return base
    noise = rng.normal(0.0, sigma, base.dim)
    return normalize(np.asarray(base.values) + noise)


def _yaw_at(spec: ScenarioSpec, pid: PersonId, frame_idx: int, frame_count: int) -> float:
    if spec.yaw_profile and pid in spec.yaw_profile:
        series = spec.yaw_profile[pid]
        return float(series[min(frame_idx, len(series) - 1)])
    if spec.kind is ScenarioKind.SIDE_FACE:
        if frame_count <= 1:
            return 90.0
        return 90.0 * frame_idx / (frame_count - 1)
    return 0.0


def _is_far(participant_idx: int, total: int) -> bool:
    return participant_idx >= (total + 1) // 2


def _layout_boxes(spec: ScenarioSpec, rng: np.random.Generator) -> list[BoundingBox]:
    """One fixed box per walker, spread across the frame width."""
    n = len(spec.participants)
    boxes = []
    slot = DEFAULT_FRAME_WIDTH // max(n, 1)
    for idx in range(n):
        far = spec.kind is ScenarioKind.GROUP_NEAR_FAR and _is_far(idx, n)
        w, h = (40, 60) if far else (80, 120)
        x = idx * slot + max((slot - w) // 2, 0)
        y = 60 if far else 100
        jitter = int(rng.integers(-5, 6))
        x = min(max(x + jitter, 0), DEFAULT_FRAME_WIDTH - w)
        boxes.append(BoundingBox(x=x, y=min(y, DEFAULT_FRAME_HEIGHT - h), w=w, h=h))
    return boxes


# -- composition helpers ------------------------------------------------------


def shift_stream(stream: FrameStream, offset_ms: int, seq_offset: int = 0) -> FrameStream:
    """Shift every timestamp (and optionally seq) to compose longer timelines."""
    frames = tuple(
        replace(f, capture_ts=f.capture_ts + offset_ms, seq=f.seq + seq_offset)
        for f in stream.frames
    )
    m = stream.manifest
    manifest = replace(
        m,
        start_ts=m.start_ts + offset_ms,
        intervals=tuple(
            replace(iv, first_ts=iv.first_ts + offset_ms, last_ts=iv.last_ts + offset_ms)
            for iv in m.intervals
        ),
        frames=tuple(
            replace(ft, seq=ft.seq + seq_offset, ts=ft.ts + offset_ms) for ft in m.frames
        ),
    )
    return FrameStream(frames=frames, manifest=manifest)


def concat_streams(streams: Sequence[FrameStream]) -> FrameStream:
    """Join same-camera streams into one, keeping seq and ts strictly ordered."""
    if not streams:
        raise ValueError("need at least one stream")
    out = [streams[0]]
    for stream in streams[1:]:
        prev = out[-1]
        if stream.manifest.camera_id != prev.manifest.camera_id:
            raise ValueError("concat_streams requires a single camera")
        seq_offset = prev.frames[-1].seq + 1 if prev.frames else 0
        out.append(shift_stream(stream, 0, seq_offset=seq_offset - stream.frames[0].seq if stream.frames else 0))
    frames = tuple(f for s in out for f in s.frames)
    for a, b in zip(frames, frames[1:]):
        if b.seq <= a.seq or b.capture_ts <= a.capture_ts:
            raise ValueError("concatenated streams are not strictly time/seq ordered")
    base = out[0].manifest
    manifest = replace(
        base,
        participants=tuple(dict.fromkeys(p for s in out for p in s.manifest.participants)),
        uninvited=tuple(dict.fromkeys(p for s in out for p in s.manifest.uninvited)),
        intervals=tuple(iv for s in out for iv in s.manifest.intervals),
        frames=tuple(ft for s in out for ft in s.manifest.frames),
        walk_duration_ms=sum(s.manifest.walk_duration_ms for s in out),
    )
    return FrameStream(frames=frames, manifest=manifest)


# -- persistence: manifest.json + frames.bin ----------------------------------


def manifest_to_json(m: StreamManifest) -> dict:
    return {
        "kind": m.kind.value,
        "camera_id": m.camera_id,
        "gate": m.gate.value,
        "fps": m.fps,
        "walk_duration_ms": m.walk_duration_ms,
        "noise_sigma": m.noise_sigma,
        "rng_seed": m.rng_seed,
        "start_ts": m.start_ts,
        "participants": list(m.participants),
        "uninvited": list(m.uninvited),
        "intervals": [
            {"person_id": iv.person_id, "first_ts": iv.first_ts, "last_ts": iv.last_ts, "uninvited": iv.uninvited}
            for iv in m.intervals
        ],
        "frames": [
            {
                "seq": ft.seq,
                "ts": ft.ts,
                "present": [
                    {"person_id": p.person_id, "yaw_deg": p.yaw_deg, "uninvited": p.uninvited}
                    for p in ft.present
                ],
            }
            for ft in m.frames
        ],
    }


def manifest_from_json(doc: dict) -> StreamManifest:
    try:
        return StreamManifest(
            kind=ScenarioKind(doc["kind"]),
            camera_id=str(doc["camera_id"]),
            gate=GateRole(doc["gate"]),
            fps=int(doc["fps"]),
            walk_duration_ms=int(doc["walk_duration_ms"]),
            noise_sigma=float(doc["noise_sigma"]),
            rng_seed=int(doc["rng_seed"]),
            start_ts=int(doc["start_ts"]),
            participants=tuple(doc["participants"]),
            uninvited=tuple(doc["uninvited"]),
            intervals=tuple(
                PresenceInterval(
                    person_id=iv["person_id"],
                    first_ts=int(iv["first_ts"]),
                    last_ts=int(iv["last_ts"]),
                    uninvited=bool(iv["uninvited"]),
                )
                for iv in doc["intervals"]
            ),
            frames=tuple(
                FrameTruth(
                    seq=int(ft["seq"]),
                    ts=int(ft["ts"]),
                    present=tuple(
                        PresentPerson(
                            person_id=p["person_id"],
                            yaw_deg=float(p["yaw_deg"]),
                            uninvited=bool(p["uninvited"]),
                        )
                        for p in ft["present"]
                    ),
                )
                for ft in doc["frames"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad stream manifest: {exc}") from exc


def save_stream(stream: FrameStream, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(manifest_to_json(stream.manifest), indent=2) + "\n", encoding="utf-8"
    )
    with (out / "frames.bin").open("wb") as fh:
        for frame in stream.frames:
            fh.write(encode_frame(frame))
    return out


def load_stream(directory: str | Path) -> FrameStream:
    src = Path(directory)
    manifest = manifest_from_json(json.loads((src / "manifest.json").read_text(encoding="utf-8")))
    data = (src / "frames.bin").read_bytes()
    frames = []
    offset = 0
    while offset < len(data):
        frame, consumed = decode_frame_prefix(data[offset:])
        frames.append(frame)
        offset += consumed
    return FrameStream(frames=tuple(frames), manifest=manifest)


def iter_stream_frames(directory: str | Path) -> Iterator[Frame]:
    yield from load_stream(directory).frames


# -- synthetic gallery --------------------------------------------------------


def make_gallery(
    count: int,
    dimension: int = 128,
    seed: int = 0,
    lookalike_pairs: int = 0,
    pose_jitter: float = 0.05,
    lookalike_delta: float = 0.1,
) -> Gallery:
    """Enroll `count` synthetic persons with front/angled/side poses.

    The first 2*lookalike_pairs persons form pairs whose base vectors sit
    close together, standing in for attendees with a similar overall look.
    """
    rng = np.random.default_rng(seed)
    entries = []
    prev_base = None
    for i in range(count):
        if lookalike_pairs > 0 and i < 2 * lookalike_pairs and i % 2 == 1 and prev_base is not None:
            base = prev_base + lookalike_delta * rng.standard_normal(dimension)
        else:
            base = rng.standard_normal(dimension)
        base = base / np.linalg.norm(base)
        prev_base = base
        poses = [(PoseKind.FRONT, Embedding(tuple(float(v) for v in base)))]
        for kind in (PoseKind.ANGLED, PoseKind.SIDE):
            jittered = base + pose_jitter * rng.standard_normal(dimension)
            poses.append((kind, normalize(jittered)))
        entries.append(
            GalleryEntry(
                person_id=f"p{i + 1:03d}",
                display_name=f"Person {i + 1:03d}",
                poses=tuple(poses),
                enrolled_at=0,
                source=EnrollmentSource.LIVE_CAPTURE,
            )
        )
    return build_gallery(dimension, entries)
