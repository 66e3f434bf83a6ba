"""Alert lifecycle: raise, cluster, deliver within SLA, resolve manually.

Recognized attendees produce informational notifications at the entry gate.
Unknown sightings are clustered (same camera, highly similar embedding,
within the chaining window) so a stranger walking six seconds in front of a
camera raises exactly one alert instead of thirty. Officials resolve unknown
alerts by validating against the gallery, registering the person on the
spot, or dismissing.

Delivery is retried with exponential backoff until some console consumes the
push; both timestamps come from the injected clock so SLA accounting is
deterministic under test.
"""

from __future__ import annotations

import base64
import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Protocol

from .clock import Clock, WallClock
from .errors import AlreadyResolved, DataError, UnknownAlert, UnknownPersonId
from .jsonl import JsonlWriter
from .ledger import Appearance, AttendanceChange, LedgerService
from .model import (
    Embedding,
    EnrollmentSource,
    GalleryEntry,
    GateRole,
    PersonId,
    PoseKind,
    cosine_similarity,
    normalize,
)
from .recognition import Detection, GalleryStore

DEFAULT_CLUSTER_THRESHOLD = 0.9
DEFAULT_CLUSTER_WINDOW_MS = 10_000
DEFAULT_NOTIFICATION_BUDGET_MS = 10_000
_BACKOFF_MS = (500, 1000, 2000, 4000, 8000)


class AlertKind(Enum):
    RECOGNIZED_NOTIFY = "recognized_notify"
    UNKNOWN_PERSON = "unknown_person"


class AlertState(Enum):
    PENDING = "pending"
    DELIVERED = "delivered"
    VALIDATED = "validated"
    REGISTERED = "registered"
    DISMISSED = "dismissed"


RESOLVED_STATES = {AlertState.VALIDATED, AlertState.REGISTERED, AlertState.DISMISSED}


@dataclass(frozen=True)
class Alert:
    alert_id: str
    kind: AlertKind
    camera_id: str
    gate: GateRole
    created_ts: int
    delivered_ts: int | None = None
    state: AlertState = AlertState.PENDING
    snapshot: bytes | None = None
    embedding: Embedding | None = None
    person_id: PersonId | None = None
    display_name: str | None = None
    sla_met: bool | None = None
    retry_count: int = 0


@dataclass
class UnknownCluster:
    cluster_id: str
    centroid: Embedding
    member_count: int
    first_ts: int
    last_ts: int
    camera_id: str
    alert_id: str


@dataclass(frozen=True)
class NewAlert:
    alert: Alert


@dataclass(frozen=True)
class Joined:
    cluster_id: str
    member_count: int


ObserveOutcome = NewAlert | Joined


@dataclass(frozen=True)
class Validate:
    person_id: PersonId


@dataclass(frozen=True)
class Register:
    display_name: str


@dataclass(frozen=True)
class Dismiss:
    pass


ResolveAction = Validate | Register | Dismiss


@dataclass(frozen=True)
class ResolutionOutcome:
    alert: Alert
    attendance: AttendanceChange | None
    registered_person_id: PersonId | None = None


class DeliveryChannel(Protocol):
    def push(self, alert: Alert) -> bool:
        """Deliver to subscribed consoles; True when at least one consumed it."""
        ...


class AlertService:
    """Serialized alert store; delivery fan-out happens outside the lock."""

    def __init__(
        self,
        out_dir: str | Path,
        channel: DeliveryChannel,
        clock: Clock | None = None,
        ledger: LedgerService | None = None,
        gallery_store: GalleryStore | None = None,
        notification_budget_ms: int = DEFAULT_NOTIFICATION_BUDGET_MS,
        cluster_threshold: float = DEFAULT_CLUSTER_THRESHOLD,
        cluster_window_ms: int = DEFAULT_CLUSTER_WINDOW_MS,
        emit: Callable[[str, dict[str, Any]], None] | None = None,
        fsync: bool = False,
    ):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._log = JsonlWriter(self.out_dir / "alerts.jsonl", fsync=fsync)
        self._channel = channel
        self._clock = clock or WallClock()
        self._ledger = ledger
        self._gallery_store = gallery_store
        self._budget_ms = notification_budget_ms
        self._cluster_threshold = cluster_threshold
        self._cluster_window_ms = cluster_window_ms
        self._emit = emit or (lambda kind, payload: None)
        self._lock = threading.Lock()
        self._alerts: dict[str, Alert] = {}
        self._order: list[str] = []
        self._clusters: list[UnknownCluster] = []
        self._next_alert = 1
        self._next_cluster = 1
        self._next_guest = 1
        self._recognized_seen: set[tuple[PersonId, int]] = set()
        self._next_attempt: dict[str, int] = {}

    # -- raising ---------------------------------------------------------

    def raise_recognized(self, appearance: Appearance) -> Alert | None:
        """One informational alert per entry appearance; replays are no-ops."""
        if appearance.gate is not GateRole.ENTRY:
            return None
        with self._lock:
            key = (appearance.person_id, appearance.first_ts)
            if key in self._recognized_seen:
                return None
            self._recognized_seen.add(key)
            alert = self._new_alert_locked(
                kind=AlertKind.RECOGNIZED_NOTIFY,
                camera_id=appearance.camera_id,
                gate=appearance.gate,
                person_id=appearance.person_id,
                display_name=appearance.display_name,
            )
        return alert

    def observe_unknown(
        self,
        detection: Detection,
        gate: GateRole,
        snapshot: bytes | None = None,
    ) -> ObserveOutcome:
        embedding = detection.observation.embedding
        ts = detection.capture_ts
        with self._lock:
            best: UnknownCluster | None = None
            best_sim = self._cluster_threshold
            for cluster in self._clusters:
                if cluster.camera_id != detection.camera_id:
                    continue
                if ts - cluster.last_ts > self._cluster_window_ms:
                    continue
                sim = cosine_similarity(cluster.centroid, embedding)
                if sim >= best_sim:
                    best_sim = sim
                    best = cluster
            if best is not None:
                merged = [
                    c * best.member_count + e
                    for c, e in zip(best.centroid.values, embedding.values)
                ]
                best.centroid = normalize(merged)
                best.member_count += 1
                best.last_ts = max(best.last_ts, ts)
                return Joined(cluster_id=best.cluster_id, member_count=best.member_count)

            cluster_id = f"cluster-{self._next_cluster:06d}"
            self._next_cluster += 1
            alert = self._new_alert_locked(
                kind=AlertKind.UNKNOWN_PERSON,
                camera_id=detection.camera_id,
                gate=gate,
                embedding=embedding,
                snapshot=snapshot,
            )
            self._clusters.append(
                UnknownCluster(
                    cluster_id=cluster_id,
                    centroid=embedding,
                    member_count=1,
                    first_ts=ts,
                    last_ts=ts,
                    camera_id=detection.camera_id,
                    alert_id=alert.alert_id,
                )
            )
            return NewAlert(alert=alert)

    def _new_alert_locked(self, kind: AlertKind, camera_id: str, gate: GateRole, **extra) -> Alert:
        alert = Alert(
            alert_id=f"alert-{self._next_alert:06d}",
            kind=kind,
            camera_id=camera_id,
            gate=gate,
            created_ts=self._clock.now_ms(),
            **extra,
        )
        self._next_alert += 1
        self._alerts[alert.alert_id] = alert
        self._order.append(alert.alert_id)
        self._next_attempt[alert.alert_id] = alert.created_ts
        self._log.append(
            {
                "type": "raised",
                "alert_id": alert.alert_id,
                "kind": alert.kind.value,
                "camera_id": alert.camera_id,
                "gate": alert.gate.value,
                "created_ts": alert.created_ts,
                "person_id": alert.person_id,
                "display_name": alert.display_name,
            }
        )
        return alert

    # -- delivery ---------------------------------------------------------

    def deliver(self, alert_id: str) -> Alert:
        """Single delivery attempt; reschedules itself on failure."""
        with self._lock:
            alert = self._alerts.get(alert_id)
            if alert is None:
                raise UnknownAlert(alert_id)
            if alert.state is not AlertState.PENDING:
                return alert
        consumed = self._channel.push(alert)
        now = self._clock.now_ms()
        with self._lock:
            alert = self._alerts[alert_id]
            if alert.state is not AlertState.PENDING:
                return alert
            if consumed:
                alert = replace(
                    alert,
                    state=AlertState.DELIVERED,
                    delivered_ts=now,
                    sla_met=(now - alert.created_ts) <= self._budget_ms,
                )
                self._alerts[alert_id] = alert
                self._next_attempt.pop(alert_id, None)
                self._log.append(
                    {
                        "type": "delivered",
                        "alert_id": alert_id,
                        "delivered_ts": now,
                        "sla_met": alert.sla_met,
                    }
                )
                self._emit("alert_raised", alert_to_json(alert))
            else:
                alert = replace(alert, retry_count=alert.retry_count + 1)
                self._alerts[alert_id] = alert
                backoff = _BACKOFF_MS[min(alert.retry_count - 1, len(_BACKOFF_MS) - 1)]
                self._next_attempt[alert_id] = now + backoff
            return alert

    def pump(self) -> int:
        """Attempt every delivery that has come due; returns attempts made."""
        now = self._clock.now_ms()
        with self._lock:
            due = [aid for aid, at in self._next_attempt.items() if at <= now]
        for alert_id in due:
            self.deliver(alert_id)
        return len(due)

    # -- resolution --------------------------------------------------------

    def resolve_alert(self, alert_id: str, action: ResolveAction) -> ResolutionOutcome:
        with self._lock:
            alert = self._alerts.get(alert_id)
            if alert is None:
                raise UnknownAlert(alert_id)
            if alert.state in RESOLVED_STATES:
                raise AlreadyResolved(f"{alert_id} is already {alert.state.value}")
            if alert.kind is not AlertKind.UNKNOWN_PERSON:
                raise DataError(f"{alert_id} is not an unknown-person alert")

            if isinstance(action, Validate):
                outcome = self._resolve_validate_locked(alert, action)
            elif isinstance(action, Register):
                outcome = self._resolve_register_locked(alert, action)
            elif isinstance(action, Dismiss):
                outcome = self._resolve_dismiss_locked(alert)
            else:
                raise DataError(f"unsupported action {action!r}")

            self._next_attempt.pop(alert_id, None)
            self._log.append(
                {
                    "type": "resolved",
                    "alert_id": alert_id,
                    "state": outcome.alert.state.value,
                    "person_id": outcome.alert.person_id,
                    "ts": self._clock.now_ms(),
                }
            )
        if self._ledger is not None:
            self._ledger.audit(
                {
                    "event": "alert_resolved",
                    "alert_id": alert_id,
                    "state": outcome.alert.state.value,
                    "person_id": outcome.alert.person_id,
                    "ts": self._clock.now_ms(),
                }
            )
        self._emit("alert_resolved", alert_to_json(outcome.alert))
        return outcome

    def _resolve_validate_locked(self, alert: Alert, action: Validate) -> ResolutionOutcome:
        store = self._gallery_store
        if store is None or action.person_id not in store.gallery().entries:
            raise UnknownPersonId(action.person_id)
        entry = store.gallery().entries[action.person_id]
        resolved = replace(
            alert, state=AlertState.VALIDATED, person_id=action.person_id, display_name=entry.display_name
        )
        self._alerts[alert.alert_id] = resolved
        attendance = None
        if self._ledger is not None:
            attendance = self._ledger.record_manual_entry(
                action.person_id, entry.display_name, alert.created_ts, camera_id=alert.camera_id
            )
        return ResolutionOutcome(alert=resolved, attendance=attendance)

    def _resolve_register_locked(self, alert: Alert, action: Register) -> ResolutionOutcome:
        if not action.display_name:
            raise DataError("register requires a display_name")
        if alert.embedding is None:
            raise DataError("alert carries no embedding to register")
        store = self._gallery_store
        if store is None:
            raise DataError("no gallery store configured for registration")
        person_id = self._fresh_guest_id_locked(store)
        entry = GalleryEntry(
            person_id=person_id,
            display_name=action.display_name,
            poses=((PoseKind.FRONT, alert.embedding),),
            enrolled_at=self._clock.now_ms(),
            source=EnrollmentSource.LIVE_CAPTURE,
        )
        store.add_entry(entry)
        resolved = replace(
            alert, state=AlertState.REGISTERED, person_id=person_id, display_name=action.display_name
        )
        self._alerts[alert.alert_id] = resolved
        attendance = None
        if self._ledger is not None:
            attendance = self._ledger.record_manual_entry(
                person_id, action.display_name, alert.created_ts, camera_id=alert.camera_id
            )
        return ResolutionOutcome(alert=resolved, attendance=attendance, registered_person_id=person_id)

    def _resolve_dismiss_locked(self, alert: Alert) -> ResolutionOutcome:
        resolved = replace(alert, state=AlertState.DISMISSED)
        self._alerts[alert.alert_id] = resolved
        return ResolutionOutcome(alert=resolved, attendance=None)

    def _fresh_guest_id_locked(self, store: GalleryStore) -> PersonId:
        existing = store.gallery().entries
        while True:
            candidate = f"guest-{self._next_guest:04d}"
            self._next_guest += 1
            if candidate not in existing:
                return candidate

    # -- views --------------------------------------------------------------

    def get(self, alert_id: str) -> Alert:
        with self._lock:
            alert = self._alerts.get(alert_id)
            if alert is None:
                raise UnknownAlert(alert_id)
            return alert

    def alerts(self, state: AlertState | None = None, kind: AlertKind | None = None) -> list[Alert]:
        with self._lock:
            out = [self._alerts[aid] for aid in self._order]
        if state is not None:
            out = [a for a in out if a.state is state]
        if kind is not None:
            out = [a for a in out if a.kind is kind]
        return out

    def sla_summary(self) -> dict[str, Any]:
        with self._lock:
            alerts = list(self._alerts.values())
        delivered = [a for a in alerts if a.delivered_ts is not None]
        within = [a for a in delivered if a.sla_met]
        return {
            "alerts_total": len(alerts),
            "delivered": len(delivered),
            "within_budget": len(within),
            "pass_rate": (len(within) / len(delivered)) if delivered else None,
            "pending": sum(1 for a in alerts if a.state is AlertState.PENDING),
        }

    def close(self) -> None:
        self._log.close()


def alert_to_json(alert: Alert, with_snapshot: bool = False) -> dict[str, Any]:
    doc = {
        "alert_id": alert.alert_id,
        "kind": alert.kind.value,
        "camera_id": alert.camera_id,
        "gate": alert.gate.value,
        "created_ts": alert.created_ts,
        "delivered_ts": alert.delivered_ts,
        "state": alert.state.value,
        "person_id": alert.person_id,
        "display_name": alert.display_name,
        "sla_met": alert.sla_met,
        "has_snapshot": alert.snapshot is not None,
    }
    if with_snapshot:
        doc["snapshot"] = (
            base64.b64encode(alert.snapshot).decode("ascii") if alert.snapshot is not None else None
        )
    return doc
