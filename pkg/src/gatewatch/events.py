"""Push-event fan-out with a bounded replay ring.

Every state change the console cares about flows through one EventBus, which
assigns a strictly increasing event_seq. Reconnecting clients replay missed
events from the ring (default 4096) and then continue live; asking for a
position that has been evicted raises EventGone.
"""

from __future__ import annotations

import queue
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any

from .clock import Clock, WallClock
from .errors import EventGone

DEFAULT_BUFFER_SIZE = 4096


class EventKind(Enum):
    RECOGNITION_ROW = "recognition_row"
    APPEARANCE_OPENED = "appearance_opened"
    ATTENDANCE_CHANGED = "attendance_changed"
    ALERT_RAISED = "alert_raised"
    ALERT_RESOLVED = "alert_resolved"
    STATS_TICK = "stats_tick"


@dataclass(frozen=True)
class PushEvent:
    event_seq: int
    kind: EventKind
    payload: dict[str, Any]
    ts: int

    def to_json(self) -> dict[str, Any]:
        return {
            "event_seq": self.event_seq,
            "kind": self.kind.value,
            "payload": self.payload,
            "ts": self.ts,
        }


class Subscription:
    def __init__(self, bus: "EventBus", replay: list[PushEvent]):
        self._bus = bus
        self._queue: queue.SimpleQueue[PushEvent | None] = queue.SimpleQueue()
        self._closed = False
        for event in replay:
            self._queue.put(event)

    @property
    def closed(self) -> bool:
        return self._closed

    def get(self, timeout: float | None = None) -> PushEvent | None:
        """Next event; None on timeout or once the subscription is closed."""
        if self._closed:
            return None
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is None:
            self._closed = True
            return None
        return item

    def close(self) -> None:
        self._bus.unsubscribe(self)

    def _push(self, event: PushEvent | None) -> None:
        self._queue.put(event)


class EventBus:
    """Single-writer ring plus per-subscriber queues for concurrent fan-out."""

    def __init__(self, buffer_size: int = DEFAULT_BUFFER_SIZE, clock: Clock | None = None):
        self._ring: deque[PushEvent] = deque(maxlen=buffer_size)
        self._clock = clock or WallClock()
        self._lock = threading.Lock()
        self._last_seq = 0
        self._subscribers: list[Subscription] = []
        self._closed = False

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self._last_seq

    def emit(self, kind: EventKind, payload: dict[str, Any]) -> PushEvent:
        with self._lock:
            self._last_seq += 1
            event = PushEvent(
                event_seq=self._last_seq,
                kind=kind,
                payload=payload,
                ts=self._clock.now_ms(),
            )
            self._ring.append(event)
            for sub in self._subscribers:
                sub._push(event)
            return event

    def subscribe(self, since: int | None = None) -> Subscription:
        """Attach a consumer, replaying buffered events after `since` first."""
        with self._lock:
            replay: list[PushEvent] = []
            if since is not None:
                oldest = self._ring[0].event_seq if self._ring else self._last_seq + 1
                if since + 1 < oldest:
                    raise EventGone(
                        f"events after {since} are gone; buffer starts at {oldest}"
                    )
                replay = [e for e in self._ring if e.event_seq > since]
            sub = Subscription(self, replay)
            self._subscribers.append(sub)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)
        sub._push(None)

    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subscribers)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            subs = list(self._subscribers)
            self._subscribers.clear()
        for sub in subs:
            sub._push(None)
