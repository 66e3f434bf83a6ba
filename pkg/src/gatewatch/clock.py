"""Injectable time sources.

Everything in the pipeline stamps timestamps from a Clock so that latency and
SLA behaviour is reproducible: WallClock in live runs, VirtualClock in replays
and tests.
"""

from __future__ import annotations

import threading
import time


class Clock:
    def now_ms(self) -> int:
        raise NotImplementedError

    def sleep_ms(self, duration_ms: int) -> None:
        raise NotImplementedError


class WallClock(Clock):
    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000

    def sleep_ms(self, duration_ms: int) -> None:
        if duration_ms > 0:
            time.sleep(duration_ms / 1000.0)


class VirtualClock(Clock):
    """Manually driven clock. sleep_ms advances time instead of blocking."""

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def sleep_ms(self, duration_ms: int) -> None:
        if duration_ms > 0:
            self.advance(duration_ms)

    def advance(self, delta_ms: int) -> int:
        with self._lock:
            self._now += int(delta_ms)
            return self._now

    def set(self, now_ms: int) -> None:
        """Jump forward to an absolute time; never moves backwards."""
        with self._lock:
            if now_ms > self._now:
                self._now = int(now_ms)
