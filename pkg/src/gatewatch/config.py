"""Pipeline configuration loaded from a JSON file.

Recognized keys: listen_addr, http_addr, backend, gallery, thresholds
{match, cluster}, budgets {frame_processing_ms, end_to_end_ms,
notification_ms}, queue_capacity, out_dir, window_ms, fsync, heartbeat_ms,
event_buffer, token, console_dir.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigInvalid
from .pipeline import DEFAULT_QUEUE_CAPACITY, LatencyBudgets


@dataclass(frozen=True)
class PipelineConfig:
    listen_addr: str = "127.0.0.1:0"
    http_addr: str = "127.0.0.1:0"
    backend: str = "reference"
    gallery: str | None = None
    match_threshold: float = 0.75
    cluster_threshold: float = 0.9
    budgets: LatencyBudgets = field(default_factory=LatencyBudgets)
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    out_dir: str = "run-out"
    window_ms: int = 10_000
    fsync: bool = False
    heartbeat_ms: int = 1000
    event_buffer: int = 4096
    token: str | None = None
    console_dir: str | None = None

    def __post_init__(self):
        if self.queue_capacity <= 0:
            raise ConfigInvalid(f"queue_capacity must be positive, got {self.queue_capacity}")
        if self.window_ms <= 0:
            raise ConfigInvalid(f"window_ms must be positive, got {self.window_ms}")
        if not 0.0 < self.match_threshold <= 1.0:
            raise ConfigInvalid(f"match threshold must be in (0, 1], got {self.match_threshold}")


def config_from_json(doc: dict) -> PipelineConfig:
    try:
        thresholds = doc.get("thresholds", {})
        budgets_doc = doc.get("budgets", {})
        budgets = LatencyBudgets(
            frame_processing_ms=int(budgets_doc.get("frame_processing_ms", 1000)),
            end_to_end_ms=int(budgets_doc.get("end_to_end_ms", 5000)),
            notification_ms=int(budgets_doc.get("notification_ms", 10000)),
        )
        return PipelineConfig(
            listen_addr=str(doc.get("listen_addr", "127.0.0.1:0")),
            http_addr=str(doc.get("http_addr", "127.0.0.1:0")),
            backend=str(doc.get("backend", "reference")),
            gallery=doc.get("gallery"),
            match_threshold=float(thresholds.get("match", 0.75)),
            cluster_threshold=float(thresholds.get("cluster", 0.9)),
            budgets=budgets,
            queue_capacity=int(doc.get("queue_capacity", DEFAULT_QUEUE_CAPACITY)),
            out_dir=str(doc.get("out_dir", "run-out")),
            window_ms=int(doc.get("window_ms", 10_000)),
            fsync=bool(doc.get("fsync", False)),
            heartbeat_ms=int(doc.get("heartbeat_ms", 1000)),
            event_buffer=int(doc.get("event_buffer", 4096)),
            token=doc.get("token"),
            console_dir=doc.get("console_dir"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad config value: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigInvalid(f"config {p} must be a JSON object")
    return config_from_json(doc)
