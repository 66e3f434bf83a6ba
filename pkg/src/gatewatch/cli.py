"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import time
from pathlib import Path

from .clock import VirtualClock
from .config import load_config
from .errors import DataError, GatewatchError, RuntimeFailure
from .ledger import PruneWindow, appearance_to_json, load_log, prune
from .metrics import render_report, report_from_run_dir
from .model import (
    DEFAULT_DIMENSION,
    EnrollmentSource,
    Gallery,
    GalleryEntry,
    PoseKind,
    build_gallery,
    load_gallery,
    normalize,
    save_gallery,
)
from .runtime import Runtime
from .scenario import ScenarioKind, ScenarioSpec, generate_scenario, load_stream, save_stream
from .model import GateRole


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gatewatch", description="Gate-camera attendance pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    enroll = sub.add_parser("enroll", help="add a person to a gallery file")
    enroll.add_argument("--gallery", required=True)
    enroll.add_argument("--person-id", required=True)
    enroll.add_argument("--name", required=True)
    enroll.add_argument("--pose", action="append", choices=["front", "angled", "side"], required=True)
    enroll.add_argument("--embedding", action="append", required=True, help="JSON vector file, pairs with --pose")
    enroll.add_argument("--dimension", type=int, default=DEFAULT_DIMENSION, help="used when creating a new gallery")
    enroll.add_argument("--source", choices=["live_capture", "document_scan"], default="live_capture")

    simulate = sub.add_parser("simulate", help="generate a walkthrough frame stream")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--participants", required=True, help="comma-separated person ids")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--fps", type=int, default=5)
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--gallery", required=True)
    simulate.add_argument("--uninvited", default="", help="comma-separated ids walking uninvited")
    simulate.add_argument("--duration-ms", type=int, default=None)
    simulate.add_argument("--noise-sigma", type=float, default=None)
    simulate.add_argument("--camera-id", default="cam-entry")
    simulate.add_argument("--gate", choices=["entry", "exit"], default="entry")
    simulate.add_argument("--start-ts", type=int, default=0)
    simulate.add_argument("--snapshots", action="store_true")

    run = sub.add_parser("run", help="serve the live pipeline until interrupted")
    run.add_argument("--config", required=True)

    replay = sub.add_parser("replay", help="deterministically replay stored streams")
    replay.add_argument("--stream", action="append", required=True, help="stream directory (repeatable)")
    replay.add_argument("--config", required=True)

    prune_cmd = sub.add_parser("prune", help="collapse a recognition log into appearances")
    prune_cmd.add_argument("--in", dest="in_path", required=True)
    prune_cmd.add_argument("--window-ms", type=int, default=10_000)
    prune_cmd.add_argument("--out", required=True)

    report = sub.add_parser("report", help="score a finished run directory")
    report.add_argument("--run-dir", required=True)
    report.add_argument("--format", choices=["table", "json"], default="table")

    return parser


def _cmd_enroll(args) -> int:
    poses = args.pose or []
    files = args.embedding or []
    if len(poses) != len(files):
        raise DataError(f"{len(poses)} --pose flags but {len(files)} --embedding flags")
    if len(poses) != len(set(poses)):
        raise DataError("pose kinds must be distinct")

    gallery_path = Path(args.gallery)
    if gallery_path.exists():
        gallery = load_gallery(gallery_path)
    else:
        gallery = Gallery(dimension=args.dimension, entries={})
    if args.person_id in gallery.entries:
        raise DataError(f"person {args.person_id!r} already enrolled")

    pose_pairs = []
    for kind, file in zip(poses, files):
        doc = json.loads(Path(file).read_text(encoding="utf-8"))
        vector = doc["embedding"] if isinstance(doc, dict) else doc
        pose_pairs.append((PoseKind(kind), normalize(vector, dim=gallery.dimension)))

    entry = GalleryEntry(
        person_id=args.person_id,
        display_name=args.name,
        poses=tuple(pose_pairs),
        enrolled_at=int(time.time() * 1000),
        source=EnrollmentSource(args.source),
    )
    updated = build_gallery(gallery.dimension, list(gallery.entries.values()) + [entry])
    save_gallery(updated, gallery_path)
    print(f"enrolled {args.person_id} with {len(pose_pairs)} pose(s); gallery size {len(updated)}")
    return 0


_KIND_ALIASES = {k.value.replace("_", "-"): k for k in ScenarioKind} | {k.value: k for k in ScenarioKind}


def _cmd_simulate(args) -> int:
    kind = _KIND_ALIASES.get(args.scenario.lower())
    if kind is None:
        raise DataError(f"unknown scenario {args.scenario!r}; expected one of {sorted(set(_KIND_ALIASES))}")
    gallery = load_gallery(args.gallery)
    participants = tuple(p for p in args.participants.split(",") if p)
    uninvited = tuple(p for p in args.uninvited.split(",") if p)
    participants = participants + tuple(p for p in uninvited if p not in participants)
    spec_kwargs = dict(
        kind=kind,
        participants=participants,
        rng_seed=args.seed,
        fps=args.fps,
        walk_duration_ms=args.duration_ms,
        uninvited=uninvited,
        camera_id=args.camera_id,
        gate=GateRole(args.gate),
        start_ts=args.start_ts,
        with_snapshots=args.snapshots,
    )
    if args.noise_sigma is not None:
        spec_kwargs["noise_sigma"] = args.noise_sigma
    stream = generate_scenario(ScenarioSpec(**spec_kwargs), gallery)
    out = save_stream(stream, args.out)
    print(f"wrote {len(stream.frames)} frames to {out}")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    runtime = Runtime(config).start(serve_http=True)
    ingest = runtime.ingest_address
    http = runtime.gateway.address if runtime.gateway else None
    print(f"pipeline listening on {ingest[0]}:{ingest[1]}", flush=True)
    if http:
        print(f"gateway at http://{http[0]}:{http[1]}/  (console under /console)", flush=True)

    # graceful shutdown on INT and TERM, even when spawned with SIGINT ignored
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    try:
        while not stop.wait(0.5):
            pass
    finally:
        stats = runtime.stop()
        print(json.dumps(stats, indent=2), flush=True)
    return 0


def _cmd_replay(args) -> int:
    config = load_config(args.config)
    streams = [load_stream(d) for d in args.stream]
    runtime = Runtime(config, clock=VirtualClock())
    stats = runtime.replay(streams)
    print(json.dumps(stats, indent=2))
    return 0


def _cmd_prune(args) -> int:
    rows = load_log(args.in_path)
    rows.sort(key=lambda r: r.ts)  # stable: ties keep log position order
    appearances = prune(rows, PruneWindow(args.window_ms))
    out = Path(args.out)
    with out.open("w", encoding="utf-8") as fh:
        for appearance in appearances:
            fh.write(json.dumps(appearance_to_json(appearance), separators=(",", ":")) + "\n")
    print(f"{len(rows)} rows -> {len(appearances)} appearances ({out})")
    return 0


def _cmd_report(args) -> int:
    report = report_from_run_dir(args.run_dir)
    print(render_report(report, args.format))
    return 0


_COMMANDS = {
    "enroll": _cmd_enroll,
    "simulate": _cmd_simulate,
    "run": _cmd_run,
    "replay": _cmd_replay,
    "prune": _cmd_prune,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except GatewatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
