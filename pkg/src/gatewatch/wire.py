"""Length-prefixed frame codec and the camera-side streamer.

Wire format: a 4-byte big-endian length prefix followed by one canonical JSON
object per frame. Key order is fixed (camera_id, gate, seq, capture_ts, width,
height, observations, snapshot) so that equal frames encode to identical
bytes. Payloads above 16 MiB are rejected outright.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from .clock import Clock, WallClock
from .errors import ConnectionLost, LengthOverflow, MalformedPayload, Truncated
from .frames import FaceObservation, Frame
from .model import BoundingBox, Embedding, GateRole, Occlusion

MAX_FRAME_BYTES = 16 * 1024 * 1024
_PREFIX = struct.Struct(">I")


def _observation_doc(obs: FaceObservation) -> dict:
    return {
        "bbox": {"x": obs.bbox.x, "y": obs.bbox.y, "w": obs.bbox.w, "h": obs.bbox.h},
        "embedding": list(obs.embedding.values),
        "yaw_deg": obs.yaw_deg,
        "occlusion": obs.occlusion.value,
        "truth_label": obs.truth_label,
    }


def frame_to_doc(frame: Frame) -> dict:
    return {
        "camera_id": frame.camera_id,
        "gate": frame.gate.value,
        "seq": frame.seq,
        "capture_ts": frame.capture_ts,
        "width": frame.width,
        "height": frame.height,
        "observations": [_observation_doc(o) for o in frame.observations],
        "snapshot": base64.b64encode(frame.snapshot).decode("ascii") if frame.snapshot is not None else None,
    }


def frame_from_doc(doc: dict) -> Frame:
    try:
        observations = tuple(
            FaceObservation(
                bbox=BoundingBox(
                    x=int(o["bbox"]["x"]),
                    y=int(o["bbox"]["y"]),
                    w=int(o["bbox"]["w"]),
                    h=int(o["bbox"]["h"]),
                ),
                embedding=Embedding(tuple(float(v) for v in o["embedding"])),
                yaw_deg=float(o["yaw_deg"]),
                occlusion=Occlusion(o["occlusion"]),
                truth_label=o["truth_label"],
            )
            for o in doc["observations"]
        )
        snapshot = base64.b64decode(doc["snapshot"]) if doc["snapshot"] is not None else None
        return Frame(
            camera_id=str(doc["camera_id"]),
            gate=GateRole(doc["gate"]),
            seq=int(doc["seq"]),
            capture_ts=int(doc["capture_ts"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            observations=observations,
            snapshot=snapshot,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad frame document: {exc}") from exc


def encode_frame(frame: Frame) -> bytes:
    payload = json.dumps(frame_to_doc(frame), separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise LengthOverflow(f"encoded frame is {len(payload)} bytes, cap is {MAX_FRAME_BYTES}")
    return _PREFIX.pack(len(payload)) + payload


def decode_frame(data: bytes) -> Frame:
    frame, consumed = decode_frame_prefix(data)
    if consumed != len(data):
        raise MalformedPayload(f"{len(data) - consumed} trailing bytes after frame")
    return frame


def decode_frame_prefix(data: bytes) -> tuple[Frame, int]:
    """Decode one frame from the head of a buffer; returns (frame, bytes consumed)."""
    if len(data) < _PREFIX.size:
        raise Truncated(f"need 4 prefix bytes, have {len(data)}")
    (length,) = _PREFIX.unpack_from(data)
    if length > MAX_FRAME_BYTES:
        raise LengthOverflow(f"declared payload of {length} bytes exceeds cap {MAX_FRAME_BYTES}")
    end = _PREFIX.size + length
    if len(data) < end:
        raise Truncated(f"declared {length} payload bytes, have {len(data) - _PREFIX.size}")
    try:
        doc = json.loads(data[_PREFIX.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"payload is not valid JSON: {exc}") from exc
    return frame_from_doc(doc), end


def read_frame(sock: socket.socket) -> Frame | None:
    """Blocking read of one frame off a stream socket; None on clean EOF."""
    header = _recv_exact(sock, _PREFIX.size)
    if header is None:
        return None
    (length,) = _PREFIX.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise LengthOverflow(f"declared payload of {length} bytes exceeds cap {MAX_FRAME_BYTES}")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise Truncated(f"connection closed mid-frame ({length} bytes expected)")
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"payload is not valid JSON: {exc}") from exc
    return frame_from_doc(doc)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on EOF at a frame boundary, Truncated mid-read."""
    if n == 0:
        return b""
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if not buf:
                return None
            raise Truncated(f"connection closed after {len(buf)} of {n} bytes")
        buf += chunk
    return buf


class StreamMode(Enum):
    REALTIME = "realtime"
    FASTEST = "fastest"


@dataclass
class TransmissionStats:
    sent: int
    failed: int
    duration_ms: int


def parse_endpoint(endpoint: str | tuple[str, int]) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint
    host, _, port = endpoint.rpartition(":")
    return host or "127.0.0.1", int(port)


def stream_frames(
    frames: Iterable[Frame],
    endpoint: str | tuple[str, int],
    mode: StreamMode = StreamMode.FASTEST,
    clock: Clock | None = None,
    send: Callable[[bytes], None] | None = None,
) -> TransmissionStats:
    """Send frames to a pipeline endpoint over the wire protocol.

    REALTIME paces sends by capture_ts deltas against the given clock;
    FASTEST sends back to back. A `send` callable replaces the TCP socket
    for fault-injection tests. Raises ConnectionLost carrying the seq of
    the frame that failed; connection-refused errors propagate as-is.
    """
    clock = clock or WallClock()
    frame_list = list(frames)
    sock: socket.socket | None = None
    if send is None:
        host, port = parse_endpoint(endpoint)
        sock = socket.create_connection((host, port))
        send = sock.sendall

    start = clock.now_ms()
    sent = 0
    try:
        prev_ts: int | None = None
        for frame in frame_list:
            if mode is StreamMode.REALTIME and prev_ts is not None:
                clock.sleep_ms(frame.capture_ts - prev_ts)
            prev_ts = frame.capture_ts
            try:
                send(encode_frame(frame))
            except OSError as exc:
                raise ConnectionLost(at_seq=frame.seq) from exc
            sent += 1
    finally:
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass
    return TransmissionStats(sent=sent, failed=len(frame_list) - sent, duration_ms=clock.now_ms() - start)
