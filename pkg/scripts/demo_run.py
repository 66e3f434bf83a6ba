#!/usr/bin/env python3
"""End-to-end desk demo without servers: synthesize a gallery, generate the
standard scenarios, replay them deterministically, and print the report.

Usage: python scripts/demo_run.py [workdir]
"""

import sys
import tempfile
from pathlib import Path

from gatewatch.clock import VirtualClock
from gatewatch.config import PipelineConfig
from gatewatch.metrics import render_report, report_from_run_dir
from gatewatch.model import GateRole, save_gallery
from gatewatch.runtime import Runtime
from gatewatch.scenario import ScenarioKind, ScenarioSpec, generate_scenario, make_gallery, save_stream


def main() -> int:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="gatewatch-demo-"))
    workdir.mkdir(parents=True, exist_ok=True)
    print(f"demo workdir: {workdir}")

    gallery = make_gallery(12, dimension=128, seed=7, lookalike_pairs=2)
    save_gallery(gallery, workdir / "gallery.json")

    specs = [
        ScenarioSpec(kind=ScenarioKind.SINGLE_PERSON, participants=("p001",),
                     rng_seed=1, noise_sigma=0.0, walk_duration_ms=7000),
        ScenarioSpec(kind=ScenarioKind.GROUP_SAME_DISTANCE,
                     participants=("p002", "p003", "p004", "walkin"), uninvited=("walkin",),
                     rng_seed=2, noise_sigma=0.0, walk_duration_ms=6500, start_ts=20_000),
        ScenarioSpec(kind=ScenarioKind.SIDE_FACE, participants=("p005",),
                     rng_seed=3, walk_duration_ms=8000, start_ts=40_000),
        ScenarioSpec(kind=ScenarioKind.MASKED, participants=("p006", "p007"),
                     rng_seed=4, walk_duration_ms=7000, start_ts=60_000),
    ]
    streams = []
    for spec in specs:
        stream = generate_scenario(spec, gallery)
        save_stream(stream, workdir / "streams" / spec.kind.value)
        streams.append(stream)
        print(f"generated {spec.kind.value}: {len(stream.frames)} frames")

    # a matching exit walkthrough so attendance sessions close
    exit_stream = generate_scenario(
        ScenarioSpec(kind=ScenarioKind.SINGLE_PERSON, participants=("p001",),
                     rng_seed=5, noise_sigma=0.0, walk_duration_ms=6000,
                     camera_id="cam-exit", gate=GateRole.EXIT, start_ts=90_000),
        gallery,
    )
    streams.append(exit_stream)

    out_dir = workdir / "run-out"
    config = PipelineConfig(gallery=str(workdir / "gallery.json"), out_dir=str(out_dir), heartbeat_ms=0)
    runtime = Runtime(config, clock=VirtualClock())
    stats = runtime.replay(streams)
    print(f"\nreplayed {stats['frames_received']} frames, dropped {stats['frames_dropped']}")

    print("\n" + render_report(report_from_run_dir(out_dir), "table"))
    print(f"\nartifacts in {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
