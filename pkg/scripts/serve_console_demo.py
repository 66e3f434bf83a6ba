#!/usr/bin/env python3
"""Serve a live gateway for the web console: three enrolled walkers plus one
stranger go through the entry camera, so the console gets a recognition feed,
one unknown-person alert to triage, and a roster to watch.

Prints the HTTP address on stdout, then serves until interrupted.

Usage: python scripts/serve_console_demo.py [--loop] [--console-dir DIR]
"""

import argparse
import tempfile
import threading
import time
from pathlib import Path

from gatewatch.config import PipelineConfig
from gatewatch.runtime import Runtime
from gatewatch.scenario import ScenarioKind, ScenarioSpec, generate_scenario, make_gallery
from gatewatch.wire import StreamMode, stream_frames


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--loop", action="store_true", help="keep replaying walkthroughs")
    parser.add_argument("--console-dir", default=None, help="serve a console build at /console")
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args()

    console_dir = args.console_dir
    if console_dir is None:
        default_dist = Path(__file__).resolve().parent.parent / "frontend" / "dist"
        console_dir = str(default_dist) if default_dist.is_dir() else None

    gallery = make_gallery(6, dimension=128, seed=99)
    config = PipelineConfig(
        out_dir=args.out_dir or tempfile.mkdtemp(prefix="gatewatch-console-"),
        console_dir=console_dir,
    )
    runtime = Runtime(config, gallery=gallery).start(serve_http=True)
    ingest_host, ingest_port = runtime.ingest_address
    http_host, http_port = runtime.gateway.address
    print(f"INGEST {ingest_host}:{ingest_port}", flush=True)
    print(f"HTTP http://{http_host}:{http_port}", flush=True)
    if console_dir:
        print(f"console at http://{http_host}:{http_port}/console/", flush=True)

    stop = threading.Event()

    def feed():
        walk = 0
        time.sleep(0.3)
        while not stop.is_set():
            stream = generate_scenario(
                ScenarioSpec(
                    kind=ScenarioKind.GROUP_SAME_DISTANCE,
                    participants=("p001", "p002", "p003", f"stranger-{walk}"),
                    uninvited=(f"stranger-{walk}",),
                    rng_seed=500 + walk,
                    fps=5,
                    walk_duration_ms=6000,
                    noise_sigma=0.0,
                    start_ts=int(time.time() * 1000),
                    with_snapshots=True,
                ),
                gallery,
            )
            try:
                stream_frames(stream.frames, (ingest_host, ingest_port), StreamMode.FASTEST)
            except OSError:
                return
            if not args.loop:
                return
            walk += 1
            stop.wait(12.0)

    feeder = threading.Thread(target=feed, daemon=True)
    feeder.start()
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        runtime.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
