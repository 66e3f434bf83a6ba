"""Recognition log, windowed dedup into appearances, and attendance sessions.

A walker recognized at a few frames per second leaves many near-duplicate
rows. Scanning each (person, camera) key's rows in time order, a row extends
the current appearance when its gap to the previous row is at most the window
(10 s by default), otherwise it starts a new one. That chaining rule is the
only reading under which a 6-8 s walkthrough always collapses to exactly one
entry, and it is equivalent to connected components under pairwise closeness,
which is how the tests check it.

Appearances at the entry gate open attendance sessions; appearances at the
exit gate close them. Anomalies (exit with no open session, re-entry while
inside) are ignored but audited, never dropped silently.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import CorruptRecord, UnsortedInput
from .jsonl import JsonlWriter, iter_jsonl
from .model import GateRole, PersonId
from .recognition import RecognitionRow

DEFAULT_WINDOW_MS = 10_000


@dataclass(frozen=True)
class PruneWindow:
    window_ms: int = DEFAULT_WINDOW_MS

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ValueError(f"window_ms must be positive, got {self.window_ms}")


@dataclass(frozen=True)
class Appearance:
    person_id: PersonId
    display_name: str
    camera_id: str
    gate: GateRole
    first_ts: int
    last_ts: int
    row_count: int
    max_similarity: float


class AttendanceStatus(Enum):
    INSIDE = "inside"
    DEPARTED = "departed"


@dataclass(frozen=True)
class AttendanceRecord:
    person_id: PersonId
    display_name: str
    entry_ts: int
    exit_ts: int | None
    status: AttendanceStatus
    session_index: int


class ChangeKind(Enum):
    CREATED = "created"
    EXIT_RECORDED = "exit_recorded"
    IGNORED = "ignored"


@dataclass(frozen=True)
class AttendanceChange:
    kind: ChangeKind
    record: AttendanceRecord | None = None
    reason: str | None = None


# -- pruning ------------------------------------------------------------------


class _OpenAppearance:
    __slots__ = ("person_id", "display_name", "camera_id", "gate", "first_ts", "last_ts", "row_count", "max_similarity")

    def __init__(self, row: RecognitionRow):
        self.person_id = row.person_id
        self.display_name = row.display_name
        self.camera_id = row.camera_id
        self.gate = row.gate
        self.first_ts = row.ts
        self.last_ts = row.ts
        self.row_count = 1
        self.max_similarity = row.similarity

    def extend(self, row: RecognitionRow) -> None:
        self.last_ts = max(self.last_ts, row.ts)
        self.row_count += 1
        self.max_similarity = max(self.max_similarity, row.similarity)

    def freeze(self) -> Appearance:
        return Appearance(
            person_id=self.person_id,
            display_name=self.display_name,
            camera_id=self.camera_id,
            gate=self.gate,
            first_ts=self.first_ts,
            last_ts=self.last_ts,
            row_count=self.row_count,
            max_similarity=self.max_similarity,
        )


class AppearanceTracker:
    """Online form of the pruning scan; prune() feeds it a whole sorted log."""

    def __init__(self, window: PruneWindow = PruneWindow()):
        self.window = window
        self._open: dict[tuple[PersonId, str], _OpenAppearance] = {}

    def feed(self, row: RecognitionRow) -> tuple[Appearance | None, list[Appearance]]:
        """Returns (appearance opened by this row if any, appearances closed)."""
        key = (row.person_id, row.camera_id)
        current = self._open.get(key)
        closed: list[Appearance] = []
        opened: Appearance | None = None
        if current is not None:
            if row.ts < current.last_ts:
                raise UnsortedInput(
                    f"row at {row.ts} arrived after {current.last_ts} for {key}"
                )
            if row.ts - current.last_ts <= self.window.window_ms:
                current.extend(row)
                return None, closed
            closed.append(current.freeze())
        fresh = _OpenAppearance(row)
        self._open[key] = fresh
        opened = fresh.freeze()
        return opened, closed

    def flush(self) -> list[Appearance]:
        out = [oa.freeze() for oa in self._open.values()]
        self._open.clear()
        out.sort(key=lambda a: (a.first_ts, a.person_id))
        return out


def prune(rows: Sequence[RecognitionRow], window: PruneWindow = PruneWindow()) -> list[Appearance]:
    """Collapse a time-sorted recognition log into appearances.

    Raises UnsortedInput unless rows are sorted by ts (stable tie order is the
    given order). Output is sorted by first_ts, ties by person_id.
    """
    last_ts = None
    for row in rows:
        if last_ts is not None and row.ts < last_ts:
            raise UnsortedInput(f"rows not sorted by ts at {row.ts} after {last_ts}")
        last_ts = row.ts
    tracker = AppearanceTracker(window)
    appearances: list[Appearance] = []
    for row in rows:
        _, closed = tracker.feed(row)
        appearances.extend(closed)
    appearances.extend(tracker.flush())
    appearances.sort(key=lambda a: (a.first_ts, a.person_id))
    return appearances


# -- attendance ---------------------------------------------------------------


class AttendanceTable:
    """Per-person session list; the last session is open iff exit_ts is unset."""

    def __init__(self):
        self._sessions: dict[PersonId, list[AttendanceRecord]] = {}

    def update(self, appearance: Appearance) -> AttendanceChange:
        sessions = self._sessions.setdefault(appearance.person_id, [])
        open_session = sessions[-1] if sessions and sessions[-1].exit_ts is None else None
        if appearance.gate is GateRole.ENTRY:
            if open_session is not None:
                return AttendanceChange(ChangeKind.IGNORED, record=open_session, reason="AlreadyInside")
            record = AttendanceRecord(
                person_id=appearance.person_id,
                display_name=appearance.display_name,
                entry_ts=appearance.first_ts,
                exit_ts=None,
                status=AttendanceStatus.INSIDE,
                session_index=len(sessions) + 1,
            )
            sessions.append(record)
            return AttendanceChange(ChangeKind.CREATED, record=record)
        # exit gate
        if open_session is None:
            return AttendanceChange(ChangeKind.IGNORED, reason="NoOpenSession")
        if appearance.first_ts < open_session.entry_ts:
            return AttendanceChange(ChangeKind.IGNORED, record=open_session, reason="ExitBeforeEntry")
        record = replace(
            open_session,
            exit_ts=appearance.first_ts,
            status=AttendanceStatus.DEPARTED,
        )
        sessions[-1] = record
        return AttendanceChange(ChangeKind.EXIT_RECORDED, record=record)

    def records(self) -> list[AttendanceRecord]:
        out = [r for sessions in self._sessions.values() for r in sessions]
        out.sort(key=lambda r: (r.entry_ts, r.person_id, r.session_index))
        return out

    def open_session(self, person_id: PersonId) -> AttendanceRecord | None:
        sessions = self._sessions.get(person_id, [])
        if sessions and sessions[-1].exit_ts is None:
            return sessions[-1]
        return None


def update_attendance(appearance: Appearance, table: AttendanceTable) -> AttendanceChange:
    return table.update(appearance)


# -- serialization ------------------------------------------------------------


def row_to_json(row: RecognitionRow) -> dict[str, Any]:
    return {
        "ts": row.ts,
        "camera_id": row.camera_id,
        "gate": row.gate.value,
        "person_id": row.person_id,
        "display_name": row.display_name,
        "similarity": row.similarity,
        "frame_seq": row.frame_seq,
    }


def row_from_json(doc: dict[str, Any]) -> RecognitionRow:
    return RecognitionRow(
        ts=int(doc["ts"]),
        camera_id=str(doc["camera_id"]),
        gate=GateRole(doc["gate"]),
        person_id=str(doc["person_id"]),
        display_name=str(doc["display_name"]),
        similarity=float(doc["similarity"]),
        frame_seq=int(doc["frame_seq"]),
    )


def appearance_to_json(a: Appearance) -> dict[str, Any]:
    return {
        "person_id": a.person_id,
        "display_name": a.display_name,
        "camera_id": a.camera_id,
        "gate": a.gate.value,
        "first_ts": a.first_ts,
        "last_ts": a.last_ts,
        "row_count": a.row_count,
        "max_similarity": a.max_similarity,
    }


def appearance_from_json(doc: dict[str, Any]) -> Appearance:
    return Appearance(
        person_id=str(doc["person_id"]),
        display_name=str(doc["display_name"]),
        camera_id=str(doc["camera_id"]),
        gate=GateRole(doc["gate"]),
        first_ts=int(doc["first_ts"]),
        last_ts=int(doc["last_ts"]),
        row_count=int(doc["row_count"]),
        max_similarity=float(doc["max_similarity"]),
    )


def attendance_to_json(r: AttendanceRecord) -> dict[str, Any]:
    return {
        "person_id": r.person_id,
        "display_name": r.display_name,
        "entry_ts": r.entry_ts,
        "exit_ts": r.exit_ts,
        "status": r.status.value,
        "session_index": r.session_index,
    }


def load_log(path: str | Path) -> list[RecognitionRow]:
    """Reload recognitions.jsonl; torn tail tolerated, bad records located."""
    rows = []
    for lineno, doc in iter_jsonl(path):
        try:
            rows.append(row_from_json(doc))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRecord(lineno, str(exc)) from exc
    return rows


def load_appearances(path: str | Path) -> list[Appearance]:
    out = []
    for lineno, doc in iter_jsonl(path):
        try:
            out.append(appearance_from_json(doc))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRecord(lineno, str(exc)) from exc
    return out


def snapshot_attendance(path: str | Path) -> AttendanceTable:
    """Rebuild the attendance table by folding the mutation log."""
    table = AttendanceTable()
    for lineno, doc in iter_jsonl(path):
        try:
            kind = doc["type"]
            if kind == "created":
                sessions = table._sessions.setdefault(doc["person_id"], [])
                sessions.append(
                    AttendanceRecord(
                        person_id=str(doc["person_id"]),
                        display_name=str(doc["display_name"]),
                        entry_ts=int(doc["entry_ts"]),
                        exit_ts=None,
                        status=AttendanceStatus.INSIDE,
                        session_index=int(doc["session_index"]),
                    )
                )
            elif kind == "exit_recorded":
                sessions = table._sessions[doc["person_id"]]
                sessions[-1] = replace(
                    sessions[-1], exit_ts=int(doc["exit_ts"]), status=AttendanceStatus.DEPARTED
                )
            else:
                raise CorruptRecord(lineno, f"unknown mutation type {kind!r}")
        except CorruptRecord:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise CorruptRecord(lineno, str(exc)) from exc
    return table


# -- the live service ---------------------------------------------------------


@dataclass(frozen=True)
class SubmitEffect:
    position: int
    opened: Appearance | None
    closed: tuple[Appearance, ...]
    change: AttendanceChange | None


class LedgerService:
    """Single-writer ledger: all submissions serialize through one lock.

    Emits (kind, payload) pairs through the optional emit callback inside the
    lock, so downstream event order matches commit order. File layout in
    out_dir: recognitions.jsonl, appearances.jsonl, attendance.jsonl,
    audit.jsonl.
    """

    def __init__(
        self,
        out_dir: str | Path,
        window: PruneWindow = PruneWindow(),
        emit: Callable[[str, dict[str, Any]], None] | None = None,
        fsync: bool = False,
    ):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._rows = JsonlWriter(self.out_dir / "recognitions.jsonl", fsync=fsync)
        self._appearances = JsonlWriter(self.out_dir / "appearances.jsonl", fsync=fsync)
        self._attendance = JsonlWriter(self.out_dir / "attendance.jsonl", fsync=fsync)
        self._audit = JsonlWriter(self.out_dir / "audit.jsonl", fsync=fsync)
        self._tracker = AppearanceTracker(window)
        self._table = AttendanceTable()
        self._emit = emit or (lambda kind, payload: None)
        self._lock = threading.Lock()
        self._position = 0
        self._closed: list[Appearance] = []

    def append_recognition(self, row: RecognitionRow) -> int:
        """Durably append one row and run it through the online prune."""
        return self.submit(row).position

    def submit(self, row: RecognitionRow) -> SubmitEffect:
        with self._lock:
            position = self._position
            self._rows.append(row_to_json(row))
            self._position += 1
            self._emit("recognition_row", row_to_json(row))
            opened, closed = self._tracker.feed(row)
            for appearance in closed:
                self._appearances.append(appearance_to_json(appearance))
                self._closed.append(appearance)
            change = None
            if opened is not None:
                self._emit("appearance_opened", appearance_to_json(opened))
                change = self._apply_attendance(opened)
            return SubmitEffect(position=position, opened=opened, closed=tuple(closed), change=change)

    def record_manual_entry(
        self, person_id: PersonId, display_name: str, ts: int, camera_id: str = "console"
    ) -> AttendanceChange:
        """Entry session opened by an official's resolution rather than a camera."""
        appearance = Appearance(
            person_id=person_id,
            display_name=display_name,
            camera_id=camera_id,
            gate=GateRole.ENTRY,
            first_ts=ts,
            last_ts=ts,
            row_count=1,
            max_similarity=1.0,
        )
        with self._lock:
            return self._apply_attendance(appearance)

    def _apply_attendance(self, appearance: Appearance) -> AttendanceChange:
        change = self._table.update(appearance)
        if change.kind is ChangeKind.CREATED:
            rec = change.record
            self._attendance.append(
                {
                    "type": "created",
                    "person_id": rec.person_id,
                    "display_name": rec.display_name,
                    "entry_ts": rec.entry_ts,
                    "session_index": rec.session_index,
                }
            )
            self._emit("attendance_changed", attendance_to_json(rec))
        elif change.kind is ChangeKind.EXIT_RECORDED:
            rec = change.record
            self._attendance.append(
                {
                    "type": "exit_recorded",
                    "person_id": rec.person_id,
                    "exit_ts": rec.exit_ts,
                    "session_index": rec.session_index,
                }
            )
            self._emit("attendance_changed", attendance_to_json(rec))
        else:
            self._audit.append(
                {
                    "event": "attendance_ignored",
                    "reason": change.reason,
                    "person_id": appearance.person_id,
                    "camera_id": appearance.camera_id,
                    "gate": appearance.gate.value,
                    "ts": appearance.first_ts,
                }
            )
        return change

    def audit(self, record: dict[str, Any]) -> None:
        with self._lock:
            self._audit.append(record)

    def drain(self) -> list[Appearance]:
        """Close every open appearance and persist it."""
        with self._lock:
            flushed = self._tracker.flush()
            for appearance in flushed:
                self._appearances.append(appearance_to_json(appearance))
                self._closed.append(appearance)
            return flushed

    def attendance_records(self) -> list[AttendanceRecord]:
        with self._lock:
            return self._table.records()

    def appearances_closed(self) -> list[Appearance]:
        with self._lock:
            return list(self._closed)

    def close(self) -> None:
        self.drain()
        for writer in (self._rows, self._appearances, self._attendance, self._audit):
            writer.close()
