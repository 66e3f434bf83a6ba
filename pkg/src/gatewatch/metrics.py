"""Run scoring: frame-level accuracy against ground truth, latency quantiles,
notification SLA, and a report in the shape of the system's headline table.

Frame-level accuracy is the primary number (a labeled observation counts as
correct iff a recognition row with that person exists for that exact frame);
appearance-level recall is reported alongside as a secondary number, with
denominators printed next to every percentage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import RunMismatch
from .jsonl import read_jsonl
from .ledger import Appearance, load_appearances, load_log
from .pipeline import quantile
from .recognition import RecognitionRow
from .scenario import ScenarioKind, StreamManifest, manifest_from_json

SIDE_FACE_SPLIT_DEG = 60.0
MULTI_PERSON_KINDS = {ScenarioKind.GROUP_SAME_DISTANCE, ScenarioKind.GROUP_NEAR_FAR}


@dataclass(frozen=True)
class Fraction:
    correct: int
    total: int

    @property
    def value(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_json(self) -> dict[str, Any]:
        return {"correct": self.correct, "total": self.total, "value": self.value}

    def render(self) -> str:
        if self.total == 0:
            return "n/a (0)"
        return f"{self.value * 100:.2f}% ({self.correct}/{self.total})"


def _merge(fractions: Iterable[Fraction]) -> Fraction:
    correct = total = 0
    for f in fractions:
        correct += f.correct
        total += f.total
    return Fraction(correct, total)


@dataclass(frozen=True)
class GroundTruth:
    """Labeled per-frame presence.

    Frames are keyed by (camera_id, capture_ts): timestamps survive the seq
    renumbering that happens when same-camera recordings are stitched for
    replay, so truth written from the original manifests still lines up.
    """

    manifests: tuple[StreamManifest, ...]

    @classmethod
    def from_manifests(cls, manifests: Sequence[StreamManifest]) -> "GroundTruth":
        return cls(manifests=tuple(manifests))

    def cameras(self) -> set[str]:
        return {m.camera_id for m in self.manifests}

    def frame_keys(self) -> set[tuple[str, int]]:
        return {(m.camera_id, ft.ts) for m in self.manifests for ft in m.frames}


@dataclass(frozen=True)
class MetricsReport:
    identity_accuracy: Fraction
    single_person_accuracy: Fraction
    multi_person_accuracy: Fraction
    side_face_below_60: Fraction
    side_face_at_or_above_60: Fraction
    per_scenario: Mapping[str, Fraction]
    appearance_recall: Fraction
    latency_ms: Mapping[str, Mapping[str, int | None]]
    notification_sla: Mapping[str, Any]
    frames: Mapping[str, int]
    budget_violations: int
    unknown_alerts: int

    def to_json(self) -> dict[str, Any]:
        return {
            "identity_accuracy": self.identity_accuracy.to_json(),
            "single_person_accuracy": self.single_person_accuracy.to_json(),
            "multi_person_accuracy": self.multi_person_accuracy.to_json(),
            "side_face_below_60": self.side_face_below_60.to_json(),
            "side_face_at_or_above_60": self.side_face_at_or_above_60.to_json(),
            "per_scenario": {k: f.to_json() for k, f in sorted(self.per_scenario.items())},
            "appearance_recall": self.appearance_recall.to_json(),
            "latency_ms": {k: dict(v) for k, v in self.latency_ms.items()},
            "notification_sla": dict(self.notification_sla),
            "frames": dict(self.frames),
            "budget_violations": self.budget_violations,
            "unknown_alerts": self.unknown_alerts,
        }


def compute_metrics(
    rows: Sequence[RecognitionRow],
    appearances: Sequence[Appearance],
    truth: GroundTruth,
    latency_samples: Sequence[dict[str, Any]] = (),
    sla_summary: Mapping[str, Any] | None = None,
    stats: Mapping[str, Any] | None = None,
    unknown_alerts: int = 0,
) -> MetricsReport:
    """Pure scoring of one run; raises RunMismatch when logs and truth disagree."""
    truth_frames = truth.frame_keys()
    for row in rows:
        if (row.camera_id, row.ts) not in truth_frames:
            raise RunMismatch(
                f"row for frame ({row.camera_id}, ts={row.ts}) has no ground truth"
            )

    recognized = {(r.camera_id, r.ts, r.person_id) for r in rows}

    per_scenario: dict[str, Fraction] = {}
    side_below = [0, 0]
    side_above = [0, 0]
    for manifest in truth.manifests:
        correct = total = 0
        for ft in manifest.frames:
            for present in ft.present:
                if present.uninvited:
                    continue
                total += 1
                hit = (manifest.camera_id, ft.ts, present.person_id) in recognized
                if hit:
                    correct += 1
                if manifest.kind is ScenarioKind.SIDE_FACE:
                    bucket = side_below if abs(present.yaw_deg) < SIDE_FACE_SPLIT_DEG else side_above
                    bucket[1] += 1
                    if hit:
                        bucket[0] += 1
        key = manifest.kind.value
        prev = per_scenario.get(key, Fraction(0, 0))
        per_scenario[key] = Fraction(prev.correct + correct, prev.total + total)

    identity = _merge(per_scenario.values())
    single = per_scenario.get(ScenarioKind.SINGLE_PERSON.value, Fraction(0, 0))
    multi = _merge(
        f for k, f in per_scenario.items() if ScenarioKind(k) in MULTI_PERSON_KINDS
    )

    recall_hits = recall_total = 0
    for manifest in truth.manifests:
        for interval in manifest.intervals:
            if interval.uninvited:
                continue
            recall_total += 1
            for a in appearances:
                if (
                    a.person_id == interval.person_id
                    and a.camera_id == manifest.camera_id
                    and a.first_ts <= interval.last_ts
                    and a.last_ts >= interval.first_ts
                ):
                    recall_hits += 1
                    break

    stage_ms: dict[str, dict[str, int | None]] = {}
    if latency_samples:
        stages = {
            "queue_wait": [s["dequeue_ts"] - s["capture_ts"] for s in latency_samples],
            "processing": [s["processed_ts"] - s["dequeue_ts"] for s in latency_samples],
            "ledger": [s["ledger_ts"] - s["processed_ts"] for s in latency_samples],
            "end_to_end": [s["ledger_ts"] - s["capture_ts"] for s in latency_samples],
        }
        for stage, values in stages.items():
            stage_ms[stage] = {
                "p50": quantile(values, 0.50),
                "p95": quantile(values, 0.95),
                "max": max(values) if values else None,
                "count": len(values),
            }
    elif stats:
        stage_ms = {k: dict(v) for k, v in stats.get("stage_ms", {}).items()}

    stats = stats or {}
    frames = {
        "received": int(stats.get("frames_received", 0)),
        "processed": int(stats.get("frames_processed", 0)),
        "dropped": int(stats.get("frames_dropped", 0)),
    }
    return MetricsReport(
        identity_accuracy=identity,
        single_person_accuracy=single,
        multi_person_accuracy=multi,
        side_face_below_60=Fraction(*side_below),
        side_face_at_or_above_60=Fraction(*side_above),
        per_scenario=per_scenario,
        appearance_recall=Fraction(recall_hits, recall_total),
        latency_ms=stage_ms,
        notification_sla=dict(sla_summary or {}),
        frames=frames,
        budget_violations=int(stats.get("budget_violations", 0)),
        unknown_alerts=unknown_alerts,
    )


# -- rendering -----------------------------------------------------------------


def render_report(report: MetricsReport, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2, sort_keys=True)
    if fmt != "table":
        raise ValueError(f"format must be table or json, got {fmt!r}")

    def ms(stage: str) -> str:
        q = report.latency_ms.get(stage)
        if not q or q.get("count") in (0, None):
            return "n/a"
        return f"p50 {q['p50']} ms, p95 {q['p95']} ms, max {q['max']} ms (n={q['count']})"

    sla = report.notification_sla
    if sla.get("delivered"):
        sla_line = (
            f"{(sla['within_budget'] / sla['delivered']) * 100:.2f}% within budget "
            f"({sla['within_budget']}/{sla['delivered']} delivered)"
        )
    else:
        sla_line = "n/a (0 delivered)"

    lines = [
        ("Identity accuracy (frame-level)", report.identity_accuracy.render()),
        ("Single person per frame", report.single_person_accuracy.render()),
        ("Multiple persons per frame", report.multi_person_accuracy.render()),
        ("Side faces below 60 degrees", report.side_face_below_60.render()),
        ("Side faces at/above 60 degrees", report.side_face_at_or_above_60.render()),
        ("Appearance recall (secondary)", report.appearance_recall.render()),
        ("Frame processing latency", ms("processing")),
        ("End-to-end latency", ms("end_to_end")),
        ("Notification within SLA", sla_line),
        ("Frames received/processed/dropped",
         f"{report.frames['received']}/{report.frames['processed']}/{report.frames['dropped']}"),
        ("Budget violations", str(report.budget_violations)),
        ("Unknown-person alerts", str(report.unknown_alerts)),
    ]
    for kind, fraction in sorted(report.per_scenario.items()):
        lines.append((f"Scenario accuracy [{kind}]", fraction.render()))
    width = max(len(label) for label, _ in lines)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in lines)


# -- run-directory loading -------------------------------------------------------


def load_truth(path: str | Path) -> GroundTruth:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth.from_manifests([manifest_from_json(m) for m in doc["streams"]])


def report_from_run_dir(run_dir: str | Path) -> MetricsReport:
    """Score a finished run directory (as written by replay/run)."""
    run = Path(run_dir)
    truth_path = run / "truth.json"
    truth = load_truth(truth_path) if truth_path.exists() else GroundTruth(manifests=())
    rows = load_log(run / "recognitions.jsonl") if (run / "recognitions.jsonl").exists() else []
    appearances = (
        load_appearances(run / "appearances.jsonl") if (run / "appearances.jsonl").exists() else []
    )
    samples = read_jsonl(run / "latencies.jsonl") if (run / "latencies.jsonl").exists() else []
    stats = (
        json.loads((run / "stats.json").read_text(encoding="utf-8"))
        if (run / "stats.json").exists()
        else {}
    )
    alerts = read_jsonl(run / "alerts.jsonl") if (run / "alerts.jsonl").exists() else []
    delivered = [a for a in alerts if a.get("type") == "delivered"]
    within = [a for a in delivered if a.get("sla_met")]
    unknown_alerts = sum(
        1 for a in alerts if a.get("type") == "raised" and a.get("kind") == "unknown_person"
    )
    sla_summary = {
        "delivered": len(delivered),
        "within_budget": len(within),
        "pass_rate": (len(within) / len(delivered)) if delivered else None,
    }
    return compute_metrics(
        rows,
        appearances,
        truth,
        latency_samples=samples,
        sla_summary=sla_summary,
        stats=stats,
        unknown_alerts=unknown_alerts,
    )


def metrics_for_runtime(runtime) -> dict[str, Any]:
    """Live view for the gateway: counters, SLA, and accuracy when truth exists."""
    doc: dict[str, Any] = {
        "stats": runtime.stats.snapshot(),
        "notification_sla": runtime.notifier.sla_summary(),
        "accuracy": None,
    }
    truth_path = Path(runtime.config.out_dir) / "truth.json"
    if truth_path.exists():
        truth = load_truth(truth_path)
        rows_path = Path(runtime.config.out_dir) / "recognitions.jsonl"
        rows = load_log(rows_path) if rows_path.exists() else []
        try:
            report = compute_metrics(
                rows,
                runtime.ledger.appearances_closed(),
                truth,
                sla_summary=runtime.notifier.sla_summary(),
                stats=runtime.stats.snapshot(),
            )
        except RunMismatch:
            return doc
        doc["accuracy"] = report.to_json()
    return doc
