from dataclasses import dataclass

import pytest

from gatewatch.clock import Clock, VirtualClock
from gatewatch.config import PipelineConfig
from gatewatch.events import EventBus
from gatewatch.ledger import LedgerService, PruneWindow
from gatewatch.model import Gallery
from gatewatch.notifier import AlertService
from gatewatch.pipeline import FrameProcessor, LatencyBudgets, PipelineStats
from gatewatch.recognition import GalleryStore, MatcherConfig
from gatewatch.runtime import BusChannel, Runtime
from gatewatch.scenario import make_gallery


@dataclass
class Stack:
    """Fully wired in-process pipeline without TCP/HTTP servers."""

    clock: Clock
    bus: EventBus
    store: GalleryStore
    ledger: LedgerService
    notifier: AlertService
    stats: PipelineStats
    processor: FrameProcessor

    def close(self):
        self.ledger.close()
        self.notifier.close()
        self.bus.close()


def build_stack(
    out_dir,
    gallery: Gallery,
    clock: Clock | None = None,
    threshold: float = 0.75,
    budgets: LatencyBudgets = LatencyBudgets(),
    window_ms: int = 10_000,
) -> Stack:
    clock = clock or VirtualClock()
    bus = EventBus(clock=clock)

    def emit(kind, payload):
        from gatewatch.events import EventKind

        bus.emit(EventKind(kind), payload)

    store = GalleryStore(gallery, MatcherConfig(threshold=threshold))
    ledger = LedgerService(out_dir, PruneWindow(window_ms), emit=emit)
    notifier = AlertService(
        out_dir,
        channel=BusChannel(bus),
        clock=clock,
        ledger=ledger,
        gallery_store=store,
        notification_budget_ms=budgets.notification_ms,
        emit=emit,
    )
    stats = PipelineStats()
    processor = FrameProcessor(
        store=store, ledger=ledger, notifier=notifier, stats=stats, clock=clock, budgets=budgets
    )
    return Stack(clock, bus, store, ledger, notifier, stats, processor)


@pytest.fixture
def gallery128():
    return make_gallery(6, dimension=128, seed=42)


@pytest.fixture
def gallery_small():
    return make_gallery(4, dimension=32, seed=5)


def runtime_config(tmp_path, gallery_path=None, **overrides) -> PipelineConfig:
    defaults = dict(
        listen_addr="127.0.0.1:0",
        http_addr="127.0.0.1:0",
        gallery=str(gallery_path) if gallery_path else None,
        out_dir=str(tmp_path / "run-out"),
        heartbeat_ms=0,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


def make_runtime(tmp_path, gallery, clock=None, **overrides) -> Runtime:
    return Runtime(runtime_config(tmp_path, **overrides), clock=clock, gallery=gallery)
