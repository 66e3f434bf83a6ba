"""Ingestion server: bounded per-camera queues, latency budgets, drop accounting.

The no-frame-loss claim is made falsifiable here: every decoded frame is
counted, admission to a bounded queue either succeeds or records a drop with
its reason, and after drain the conservation identity
frames_received == frames_processed + frames_dropped must hold exactly.

Frames that blow the per-frame processing budget are still delivered; the
violation is an observable event, not an admission criterion.
"""

from __future__ import annotations

import math
import socket
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

from .clock import Clock
from .errors import BackendFailure, BindFailure, ConfigInvalid, GatewatchError
from .frames import Frame
from .ledger import LedgerService
from .model import GateRole
from .notifier import AlertService
from .recognition import Detection, GalleryStore, RecognitionRow
from .wire import read_frame

DEFAULT_QUEUE_CAPACITY = 64


@dataclass(frozen=True)
class LatencyBudgets:
    frame_processing_ms: int = 1000
    end_to_end_ms: int = 5000
    notification_ms: int = 10000

    def __post_init__(self):
        if not 0 < self.frame_processing_ms <= self.end_to_end_ms <= self.notification_ms:
            raise ConfigInvalid(
                "budgets must satisfy 0 < frame_processing <= end_to_end <= notification, got "
                f"{self.frame_processing_ms}/{self.end_to_end_ms}/{self.notification_ms}"
            )


@dataclass(frozen=True)
class LatencySample:
    camera_id: str
    frame_seq: int
    capture_ts: int
    dequeue_ts: int
    processed_ts: int
    ledger_ts: int

    def __post_init__(self):
        if not self.capture_ts <= self.dequeue_ts <= self.processed_ts <= self.ledger_ts:
            raise ValueError(
                f"latency stages must be monotone: {self.capture_ts} <= {self.dequeue_ts} "
                f"<= {self.processed_ts} <= {self.ledger_ts}"
            )

    @property
    def queue_wait_ms(self) -> int:
        return self.dequeue_ts - self.capture_ts

    @property
    def processing_ms(self) -> int:
        return self.processed_ts - self.dequeue_ts

    @property
    def ledger_ms(self) -> int:
        return self.ledger_ts - self.processed_ts

    @property
    def end_to_end_ms(self) -> int:
        return self.ledger_ts - self.capture_ts

    def to_json(self) -> dict[str, Any]:
        return {
            "camera_id": self.camera_id,
            "frame_seq": self.frame_seq,
            "capture_ts": self.capture_ts,
            "dequeue_ts": self.dequeue_ts,
            "processed_ts": self.processed_ts,
            "ledger_ts": self.ledger_ts,
        }


class DropReason(Enum):
    QUEUE_FULL = "queue_full"
    STALE_SEQ = "stale_seq"
    BACKEND_FAILURE = "backend_failure"


@dataclass(frozen=True)
class Admitted:
    pass


@dataclass(frozen=True)
class Dropped:
    reason: DropReason


AdmitResult = Admitted | Dropped

STAGES = ("queue_wait", "processing", "ledger", "end_to_end")


def quantile(samples: list[int], q: float) -> int | None:
    """Nearest-rank quantile; None for an empty sample set."""
    if not samples:
        return None
    ordered = sorted(samples)
    idx = min(len(ordered) - 1, max(0, math.ceil(q * len(ordered)) - 1))
    return ordered[idx]


class PipelineStats:
    """Atomic counters plus per-stage latency samples."""

    def __init__(self):
        self._lock = threading.Lock()
        self._received = 0
        self._processed = 0
        self._dropped: dict[DropReason, int] = {r: 0 for r in DropReason}
        self._budget_violations = 0
        self._samples: dict[str, list[int]] = {stage: [] for stage in STAGES}
        self._frozen: dict[str, Any] | None = None

    def record_received(self, n: int = 1) -> None:
        with self._lock:
            self._received += n

    def record_dropped(self, reason: DropReason) -> None:
        with self._lock:
            self._dropped[reason] += 1

    def record_processed(self, sample: LatencySample, budget_violation: bool) -> None:
        with self._lock:
            self._processed += 1
            if budget_violation:
                self._budget_violations += 1
            self._samples["queue_wait"].append(sample.queue_wait_ms)
            self._samples["processing"].append(sample.processing_ms)
            self._samples["ledger"].append(sample.ledger_ms)
            self._samples["end_to_end"].append(sample.end_to_end_ms)

    def freeze(self) -> dict[str, Any]:
        """Capture the post-drain snapshot; later snapshots return it verbatim."""
        with self._lock:
            if self._frozen is None:
                self._frozen = self._snapshot_locked()
            return self._frozen

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            if self._frozen is not None:
                return self._frozen
            return self._snapshot_locked()

    def _snapshot_locked(self) -> dict[str, Any]:
        dropped = sum(self._dropped.values())
        return {
            "frames_received": self._received,
            "frames_processed": self._processed,
            "frames_dropped": dropped,
            "frames_in_flight": self._received - self._processed - dropped,
            "drops": {r.value: n for r, n in self._dropped.items() if n},
            "budget_violations": self._budget_violations,
            "stage_ms": {
                stage: {
                    "p50": quantile(samples, 0.50),
                    "p95": quantile(samples, 0.95),
                    "max": max(samples) if samples else None,
                    "count": len(samples),
                }
                for stage, samples in self._samples.items()
            },
        }


class CameraQueue:
    """Bounded frame queue for one camera; drop-newest, stale seqs rejected."""

    def __init__(self, camera_id: str, capacity: int = DEFAULT_QUEUE_CAPACITY):
        self.camera_id = camera_id
        self.capacity = capacity
        self._frames: deque[Frame] = deque()
        self._cond = threading.Condition()
        self._last_seq: int | None = None
        self._closed = False

    def admit(self, frame: Frame) -> AdmitResult:
        with self._cond:
            if self._last_seq is not None and frame.seq <= self._last_seq:
                return Dropped(DropReason.STALE_SEQ)
            if len(self._frames) >= self.capacity:
                return Dropped(DropReason.QUEUE_FULL)
            self._frames.append(frame)
            self._last_seq = frame.seq
            self._cond.notify()
            return Admitted()

    def get(self, timeout: float | None = None) -> Frame | None:
        """Next frame; None once closed and empty (or on timeout)."""
        with self._cond:
            while not self._frames:
                if self._closed:
                    return None
                if not self._cond.wait(timeout=timeout):
                    return None
            return self._frames.popleft()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def is_drained(self) -> bool:
        with self._cond:
            return self._closed and not self._frames

    def __len__(self) -> int:
        with self._cond:
            return len(self._frames)


def admit(frame: Frame, queue: CameraQueue) -> AdmitResult:
    return queue.admit(frame)


class FrameProcessor:
    """Recognition plus ledger/notifier hand-off for one frame at a time."""

    def __init__(
        self,
        store: GalleryStore,
        ledger: LedgerService,
        notifier: AlertService | None,
        stats: PipelineStats,
        clock: Clock,
        budgets: LatencyBudgets = LatencyBudgets(),
        sample_sink: Callable[[LatencySample, bool], None] | None = None,
    ):
        self.store = store
        self.ledger = ledger
        self.notifier = notifier
        self.stats = stats
        self.clock = clock
        self.budgets = budgets
        self._sample_sink = sample_sink

    def process(self, frame: Frame, dequeue_ts: int | None = None) -> tuple[list[RecognitionRow], list[Detection], LatencySample]:
        if dequeue_ts is None:
            dequeue_ts = self.clock.now_ms()
        try:
            backend = self.store.snapshot()
            rows, unknowns = backend.recognize_frame(frame)
        except GatewatchError:
            raise
        except Exception as exc:
            raise BackendFailure(str(exc)) from exc
        processed_ts = self.clock.now_ms()

        for row in rows:
            effect = self.ledger.submit(row)
            if (
                effect.opened is not None
                and self.notifier is not None
                and effect.opened.gate is GateRole.ENTRY
            ):
                self.notifier.raise_recognized(effect.opened)
        if self.notifier is not None:
            for detection in unknowns:
                self.notifier.observe_unknown(detection, gate=frame.gate, snapshot=frame.snapshot)
        ledger_ts = self.clock.now_ms()

        sample = LatencySample(
            camera_id=frame.camera_id,
            frame_seq=frame.seq,
            capture_ts=frame.capture_ts,
            dequeue_ts=max(dequeue_ts, frame.capture_ts),
            processed_ts=max(processed_ts, frame.capture_ts),
            ledger_ts=max(ledger_ts, frame.capture_ts),
        )
        violation = sample.processing_ms > self.budgets.frame_processing_ms
        self.stats.record_processed(sample, violation)
        if self._sample_sink is not None:
            self._sample_sink(sample, violation)
        return rows, unknowns, sample


class PipelineServer:
    """TCP front door: one reader per connection, one processing lane per camera."""

    def __init__(
        self,
        listen_addr: str,
        processor: FrameProcessor,
        stats: PipelineStats,
        queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
    ):
        self.listen_addr = listen_addr
        self.processor = processor
        self.stats = stats
        self.queue_capacity = queue_capacity
        self._sock: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._readers: list[threading.Thread] = []
        self._conns: list[socket.socket] = []
        self._lanes: dict[str, CameraQueue] = {}
        self._lane_threads: dict[str, threading.Thread] = {}
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self._stopped = False

    @property
    def address(self) -> tuple[str, int]:
        assert self._sock is not None, "server not started"
        return self._sock.getsockname()[:2]

    def start(self) -> None:
        host, _, port = self.listen_addr.rpartition(":")
        try:
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind((host or "127.0.0.1", int(port)))
            sock.listen(16)
        except OSError as exc:
            raise BindFailure(f"cannot listen on {self.listen_addr}: {exc}") from exc
        self._sock = sock
        self._accept_thread = threading.Thread(target=self._accept_loop, name="pipeline-accept", daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        assert self._sock is not None
        while not self._stopping.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            with self._lock:
                self._conns.append(conn)
                reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
                self._readers.append(reader)
            reader.start()

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            while not self._stopping.is_set():
                frame = read_frame(conn)
                if frame is None:
                    return
                self.ingest(frame)
        except GatewatchError:
            return
        except OSError:
            return
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def ingest(self, frame: Frame) -> AdmitResult:
        """Count, admit, and route one decoded frame."""
        self.stats.record_received()
        lane = self._lane(frame.camera_id)
        result = lane.admit(frame)
        if isinstance(result, Dropped):
            self.stats.record_dropped(result.reason)
        return result

    def _lane(self, camera_id: str) -> CameraQueue:
        with self._lock:
            lane = self._lanes.get(camera_id)
            if lane is None:
                lane = CameraQueue(camera_id, self.queue_capacity)
                self._lanes[camera_id] = lane
                worker = threading.Thread(
                    target=self._process_loop, args=(lane,), name=f"lane-{camera_id}", daemon=True
                )
                self._lane_threads[camera_id] = worker
                worker.start()
            return lane

    def _process_loop(self, lane: CameraQueue) -> None:
        while True:
            frame = lane.get(timeout=0.2)
            if frame is None:
                if lane.is_drained():
                    return
                continue
            try:
                self.processor.process(frame)
            except BackendFailure:
                self.stats.record_dropped(DropReason.BACKEND_FAILURE)
            except GatewatchError:
                self.stats.record_dropped(DropReason.BACKEND_FAILURE)

    def drain(self) -> None:
        """Flush every lane; in-flight frames finish before this returns.

        Lanes are retired afterwards, so a still-connected camera simply gets
        a fresh lane on its next frame.
        """
        with self._lock:
            lanes = list(self._lanes.values())
            workers = list(self._lane_threads.values())
            self._lanes.clear()
            self._lane_threads.clear()
        for lane in lanes:
            lane.close()
        for worker in workers:
            worker.join()

    def stop(self) -> None:
        if self._stopped:
            return
        self._stopping.set()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._conns)
            readers = list(self._readers)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        for reader in readers:
            reader.join(timeout=5)
        self.drain()
        self._stopped = True
