"""Composition root: wires gallery, ledger, notifier, bus, pipeline, gateway.

Two ways to drive it: start() brings up the TCP ingest server (and optionally
the HTTP gateway) against a wall clock; replay() pushes stored streams through
the same admission and processing path against a virtual clock, deterministic
and fast. Both end in stop(), which drains queues, closes open appearances,
freezes stats, and writes run artifacts into out_dir.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Sequence

from .clock import Clock, VirtualClock, WallClock
from .config import PipelineConfig
from .errors import GatewatchError
from .events import EventBus, EventKind
from .frames import Frame
from .jsonl import JsonlWriter
from .ledger import LedgerService, PruneWindow
from .model import Gallery, load_gallery
from .notifier import Alert, AlertService
from .pipeline import (
    CameraQueue,
    Dropped,
    DropReason,
    FrameProcessor,
    LatencySample,
    PipelineServer,
    PipelineStats,
)
from .recognition import GalleryStore, MatcherConfig
from .scenario import FrameStream, manifest_to_json


class BusChannel:
    """Delivery channel backed by the event bus; consumed iff someone listens."""

    def __init__(self, bus: EventBus):
        self._bus = bus

    def push(self, alert: Alert) -> bool:
        return self._bus.subscriber_count() > 0


class Runtime:
    def __init__(
        self,
        config: PipelineConfig,
        clock: Clock | None = None,
        gallery: Gallery | None = None,
    ):
        self.config = config
        self.clock = clock or WallClock()
        if gallery is None:
            if config.gallery is None:
                raise ValueError("config.gallery path or an explicit gallery is required")
            gallery = load_gallery(config.gallery)
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        self.bus = EventBus(buffer_size=config.event_buffer, clock=self.clock)
        self.store = GalleryStore(
            gallery, MatcherConfig(threshold=config.match_threshold), backend=config.backend
        )
        self.ledger = LedgerService(
            self.out_dir,
            window=PruneWindow(config.window_ms),
            emit=self._emit,
            fsync=config.fsync,
        )
        self.notifier = AlertService(
            self.out_dir,
            channel=BusChannel(self.bus),
            clock=self.clock,
            ledger=self.ledger,
            gallery_store=self.store,
            notification_budget_ms=config.budgets.notification_ms,
            cluster_threshold=config.cluster_threshold,
            emit=self._emit,
            fsync=config.fsync,
        )
        self.stats = PipelineStats()
        self._latency_log = JsonlWriter(self.out_dir / "latencies.jsonl", fsync=False)
        self._latency_lock = threading.Lock()
        self.processor = FrameProcessor(
            store=self.store,
            ledger=self.ledger,
            notifier=self.notifier,
            stats=self.stats,
            clock=self.clock,
            budgets=config.budgets,
            sample_sink=self._record_sample,
        )
        self.server: PipelineServer | None = None
        self.gateway = None  # set by start() when HTTP is enabled
        self._pump_thread: threading.Thread | None = None
        self._pump_stop = threading.Event()
        self._stopped = False

    def _emit(self, kind: str, payload: dict[str, Any]) -> None:
        self.bus.emit(EventKind(kind), payload)

    def _record_sample(self, sample: LatencySample, violation: bool) -> None:
        doc = sample.to_json()
        doc["budget_violation"] = violation
        with self._latency_lock:
            self._latency_log.append(doc)

    # -- live mode ---------------------------------------------------------

    def start(self, serve_http: bool = True, pump_interval_ms: int = 100) -> "Runtime":
        self.server = PipelineServer(
            self.config.listen_addr,
            processor=self.processor,
            stats=self.stats,
            queue_capacity=self.config.queue_capacity,
        )
        self.server.start()
        if serve_http:
            from .gateway import GatewayServer

            self.gateway = GatewayServer(self.config.http_addr, self)
            self.gateway.start()
        self._pump_stop.clear()
        self._pump_thread = threading.Thread(
            target=self._pump_loop, args=(pump_interval_ms,), daemon=True, name="notifier-pump"
        )
        self._pump_thread.start()
        return self

    def _pump_loop(self, interval_ms: int) -> None:
        while not self._pump_stop.wait(interval_ms / 1000.0):
            self.notifier.pump()

    @property
    def ingest_address(self) -> tuple[str, int]:
        assert self.server is not None, "runtime not started"
        return self.server.address

    def drain(self) -> None:
        """Flush camera queues; in-flight frames finish, service keeps running."""
        if self.server is not None:
            self.server.drain()

    # -- replay mode ---------------------------------------------------------

    def replay(self, streams: Sequence[FrameStream]) -> dict[str, Any]:
        """Feed stored streams through admission/processing on a virtual clock.

        Streams sharing a camera are stitched into one ordered source first
        (a camera cannot emit two recordings at once). Frames are then
        interleaved globally by capture_ts (ties by camera then seq), the
        clock jumps to each frame's capture time, and delivery pumping runs
        after every step so notification timing is exact.
        """
        if not isinstance(self.clock, VirtualClock):
            raise ValueError("replay requires a VirtualClock runtime")
        originals = list(streams)
        stitched = _stitch_per_camera(originals)
        frames = sorted(
            (f for s in stitched for f in s.frames),
            key=lambda f: (f.capture_ts, f.camera_id, f.seq),
        )
        lanes = _ReplayLanes(self)
        for frame in frames:
            self.clock.set(frame.capture_ts)
            lanes.step(frame)
            self.notifier.pump()
        self.write_truth(originals)
        return self.stop()

    def write_truth(self, streams: Sequence[FrameStream]) -> None:
        doc = {"streams": [manifest_to_json(s.manifest) for s in streams]}
        (self.out_dir / "truth.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    # -- shutdown ------------------------------------------------------------

    def stop(self) -> dict[str, Any]:
        """Drain, persist, freeze; idempotent. Returns the final stats snapshot."""
        if self._stopped:
            return self.stats.snapshot()
        self._stopped = True
        if self._pump_thread is not None:
            self._pump_stop.set()
            self._pump_thread.join(timeout=5)
        if self.server is not None:
            self.server.stop()
        self.notifier.pump()
        self.ledger.close()
        self.notifier.close()
        final = self.stats.freeze()
        (self.out_dir / "stats.json").write_text(json.dumps(final, indent=2) + "\n", encoding="utf-8")
        self._latency_log.close()
        if self.gateway is not None:
            self.gateway.stop()
        self.bus.close()
        return final


def _stitch_per_camera(streams: Sequence[FrameStream]) -> list[FrameStream]:
    from .scenario import concat_streams

    by_camera: dict[str, list[FrameStream]] = {}
    for stream in streams:
        by_camera.setdefault(stream.manifest.camera_id, []).append(stream)
    out = []
    for group in by_camera.values():
        if len(group) == 1:
            out.append(group[0])
        else:
            group.sort(key=lambda s: s.frames[0].capture_ts if s.frames else s.manifest.start_ts)
            out.append(concat_streams(group))
    return out


class _ReplayLanes:
    """Single-threaded admit-then-process, reusing the server queue semantics."""

    def __init__(self, runtime: Runtime):
        self._runtime = runtime
        self._lanes: dict[str, CameraQueue] = {}

    def step(self, frame: Frame) -> None:
        runtime = self._runtime
        lane = self._lanes.get(frame.camera_id)
        if lane is None:
            lane = CameraQueue(frame.camera_id, runtime.config.queue_capacity)
            self._lanes[frame.camera_id] = lane
        runtime.stats.record_received()
        result = lane.admit(frame)
        if isinstance(result, Dropped):
            runtime.stats.record_dropped(result.reason)
            return
        queued = lane.get(timeout=0)
        assert queued is not None
        try:
            runtime.processor.process(queued)
        except GatewatchError:
            runtime.stats.record_dropped(DropReason.BACKEND_FAILURE)
