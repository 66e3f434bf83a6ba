"""Line-delimited JSON persistence with crash-tolerant reads.

Files are UTF-8, LF-terminated, one object per line. A torn final line (the
signature of a crash mid-append) is tolerated with a warning; garbage anywhere
else is reported with its 1-based line number.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Iterator

from .errors import CorruptRecord, StorageFailure

log = logging.getLogger(__name__)


class JsonlWriter:
    """Append-only writer; single-writer discipline is the caller's job."""

    def __init__(self, path: str | Path, fsync: bool = False):
        self.path = Path(path)
        self._fsync = fsync
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("a", encoding="utf-8")
        except OSError as exc:
            raise StorageFailure(f"cannot open {self.path}: {exc}") from exc

    def append(self, obj: dict[str, Any]) -> None:
        try:
            self._fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._fh.flush()
            if self._fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot append to {self.path}: {exc}") from exc

    def close(self) -> None:
        try:
            self._fh.close()
        except OSError:
            pass


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Read every record; tolerate a torn final line, reject mid-file garbage."""
    return [obj for _, obj in iter_jsonl(path)]


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    p = Path(path)
    try:
        raw = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageFailure(f"cannot read {p}: {exc}") from exc
    lines = raw.split("\n")
    # A trailing newline leaves one empty tail element; drop it.
    if lines and lines[-1] == "":
        lines.pop()
    last_index = len(lines) - 1
    for i, line in enumerate(lines):
        if not line.strip():
            if i == last_index:
                continue
            raise CorruptRecord(i + 1, "blank line")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            if i == last_index:
                log.warning("%s: discarding torn final line %d (%s)", p, i + 1, exc.msg)
                return
            raise CorruptRecord(i + 1, exc.msg) from exc
        if not isinstance(obj, dict):
            raise CorruptRecord(i + 1, "not a JSON object")
        yield i + 1, obj
