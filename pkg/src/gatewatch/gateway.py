"""HTTP/JSON surface for the security console and scripting clients.

Endpoints under /api: attendance, alerts (+ resolve), gallery, metrics, and a
server-sent-events push stream with ring-buffer replay. The console bundle is
served statically under /console. Reads are side-effect free; every mutation
funnels through the notifier/ledger serialization points.
"""

from __future__ import annotations

import json
import threading
import traceback
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import TYPE_CHECKING, Any
from urllib.parse import parse_qs, urlparse

from .errors import (
    AlreadyResolved,
    BindFailure,
    DataError,
    EventGone,
    GalleryInvalid,
    UnknownAlert,
    UnknownPersonId,
)
from .events import EventKind
from .ledger import AttendanceStatus, attendance_to_json
from .model import normalize
from .notifier import AlertKind, AlertState, Dismiss, Register, Validate, alert_to_json

if TYPE_CHECKING:
    from .runtime import Runtime

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class _ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message


class GatewayServer:
    def __init__(self, http_addr: str, runtime: "Runtime"):
        self.runtime = runtime
        host, _, port = http_addr.rpartition(":")
        handler = _make_handler(self)
        try:
            self._httpd = ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind gateway on {http_addr}: {exc}") from exc
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None
        self._ticker: threading.Thread | None = None
        self._ticker_stop = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True, name="gateway-http")
        self._thread.start()
        period = self.runtime.config.heartbeat_ms
        if period > 0:
            self._ticker = threading.Thread(target=self._tick_loop, args=(period,), daemon=True, name="stats-ticker")
            self._ticker.start()

    def _tick_loop(self, period_ms: int) -> None:
        while not self._ticker_stop.wait(period_ms / 1000.0):
            self.runtime.bus.emit(EventKind.STATS_TICK, self.runtime.stats.snapshot())

    def stop(self) -> None:
        self._ticker_stop.set()
        if self._ticker is not None:
            self._ticker.join(timeout=2)
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _make_handler(gateway: GatewayServer):
    runtime = gateway.runtime

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "gatewatch"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- plumbing ------------------------------------------------------

        def _reply_json(self, status: int, doc: Any) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            # one response per connection: keep-alive reuse races a threaded
            # server's close and is worth nothing at desk scale
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(body)
            self.close_connection = True

        def _reply_error(self, status: int, code: str, message: str) -> None:
            self._reply_json(status, {"error": code, "message": message})

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                raise _ApiError(422, "malformed_body", "request body required")
            try:
                doc = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise _ApiError(422, "malformed_body", f"body is not valid JSON: {exc}")
            if not isinstance(doc, dict):
                raise _ApiError(422, "malformed_body", "body must be a JSON object")
            return doc

        def _check_token(self) -> None:
            token = runtime.config.token
            if token and self.headers.get("X-Auth-Token") != token:
                raise _ApiError(401, "unauthorized", "missing or wrong X-Auth-Token")

        def _query(self) -> dict[str, list[str]]:
            return parse_qs(urlparse(self.path).query)

        def _route(self) -> str:
            return urlparse(self.path).path

        # -- dispatch --------------------------------------------------------

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def _dispatch(self, method: str) -> None:
            path = self._route()
            try:
                if path.startswith("/api/"):
                    self._check_token()
                    self._api(method, path)
                elif method == "GET" and (path == "/" or path.startswith("/console")):
                    self._console(path)
                else:
                    raise _ApiError(404, "not_found", f"no route for {method} {path}")
            except _ApiError as exc:
                self._reply_error(exc.status, exc.code, exc.message)
            except UnknownAlert as exc:
                self._reply_error(404, "unknown_alert", str(exc))
            except AlreadyResolved as exc:
                self._reply_error(409, "already_resolved", str(exc))
            except EventGone as exc:
                self._reply_error(410, "gone", str(exc))
            except UnknownPersonId as exc:
                self._reply_error(422, "unknown_person", str(exc))
            except GalleryInvalid as exc:
                self._reply_error(422, "invalid_gallery_entry", str(exc))
            except DataError as exc:
                self._reply_error(422, "invalid_request", str(exc))
            except (BrokenPipeError, ConnectionResetError):
                pass
            except Exception:
                traceback.print_exc()
                self._reply_error(500, "internal", "unexpected server error")

        def _api(self, method: str, path: str) -> None:
            parts = [p for p in path.split("/") if p]  # ["api", ...]
            if method == "GET" and path == "/api/attendance":
                return self._get_attendance()
            if method == "GET" and path == "/api/alerts":
                return self._get_alerts()
            if method == "POST" and len(parts) == 4 and parts[1] == "alerts" and parts[3] == "resolve":
                return self._post_resolve(parts[2])
            if method == "GET" and path == "/api/gallery":
                return self._get_gallery()
            if method == "POST" and path == "/api/gallery":
                return self._post_gallery()
            if method == "GET" and path == "/api/metrics":
                return self._get_metrics()
            if method == "GET" and path == "/api/events":
                return self._get_events()
            raise _ApiError(404, "not_found", f"no route for {method} {path}")

        # -- endpoints ---------------------------------------------------------

        def _get_attendance(self) -> None:
            query = self._query()
            records = runtime.ledger.attendance_records()
            raw = query.get("status", [None])[0]
            if raw is not None:
                try:
                    wanted = AttendanceStatus(raw.lower())
                except ValueError:
                    raise _ApiError(400, "bad_filter", f"status must be inside|departed, got {raw!r}")
                records = [r for r in records if r.status is wanted]
            records.sort(key=lambda r: (r.entry_ts, r.person_id, r.session_index))
            self._reply_json(200, [attendance_to_json(r) for r in records])

        def _get_alerts(self) -> None:
            query = self._query()
            states = None
            if "state" in query:
                try:
                    states = {AlertState(s.lower()) for part in query["state"] for s in part.split(",") if s}
                except ValueError as exc:
                    raise _ApiError(400, "bad_filter", f"bad alert state: {exc}")
            kind = None
            if "kind" in query:
                try:
                    kind = AlertKind(query["kind"][0].lower())
                except ValueError as exc:
                    raise _ApiError(400, "bad_filter", f"bad alert kind: {exc}")
            alerts = runtime.notifier.alerts(kind=kind)
            if states is not None:
                alerts = [a for a in alerts if a.state in states]
            self._reply_json(200, [alert_to_json(a, with_snapshot=True) for a in alerts])

        def _post_resolve(self, alert_id: str) -> None:
            body = self._read_body()
            action_name = body.get("action")
            if action_name == "validate":
                person_id = body.get("person_id")
                if not isinstance(person_id, str) or not person_id:
                    raise _ApiError(422, "malformed_body", "validate requires person_id")
                action = Validate(person_id=person_id)
            elif action_name == "register":
                display_name = body.get("display_name")
                if not isinstance(display_name, str) or not display_name:
                    raise _ApiError(422, "malformed_body", "register requires display_name")
                action = Register(display_name=display_name)
            elif action_name == "dismiss":
                action = Dismiss()
            else:
                raise _ApiError(422, "malformed_body", "action must be validate|register|dismiss")
            outcome = runtime.notifier.resolve_alert(alert_id, action)
            self._reply_json(
                200,
                {
                    "alert": alert_to_json(outcome.alert),
                    "attendance": attendance_to_json(outcome.attendance.record)
                    if outcome.attendance is not None and outcome.attendance.record is not None
                    else None,
                    "registered_person_id": outcome.registered_person_id,
                },
            )

        def _get_gallery(self) -> None:
            query = self._query()
            with_embeddings = query.get("embeddings", ["false"])[0].lower() == "true"
            gallery = runtime.store.gallery()
            entries = []
            for entry in gallery.entries.values():
                doc: dict[str, Any] = {
                    "person_id": entry.person_id,
                    "display_name": entry.display_name,
                    "pose_kinds": [k.value for k, _ in entry.poses],
                    "enrolled_at": entry.enrolled_at,
                    "source": entry.source.value,
                }
                if with_embeddings:
                    doc["poses"] = [
                        {"kind": k.value, "embedding": list(e.values)} for k, e in entry.poses
                    ]
                entries.append(doc)
            self._reply_json(200, {"dimension": gallery.dimension, "entries": entries})

        def _post_gallery(self) -> None:
            from .model import EnrollmentSource, GalleryEntry, PoseKind

            body = self._read_body()
            person_id = body.get("person_id")
            display_name = body.get("display_name")
            poses_doc = body.get("poses")
            if not isinstance(person_id, str) or not person_id:
                raise _ApiError(422, "malformed_body", "person_id required")
            if not isinstance(display_name, str) or not display_name:
                raise _ApiError(422, "malformed_body", "display_name required")
            if not isinstance(poses_doc, list) or not poses_doc:
                raise _ApiError(422, "malformed_body", "poses required")
            gallery = runtime.store.gallery()
            if person_id in gallery.entries:
                self._reply_error(409, "duplicate_person_id", f"{person_id!r} already enrolled")
                return
            try:
                poses = tuple(
                    (PoseKind(p["kind"]), normalize(p["embedding"], dim=gallery.dimension))
                    for p in poses_doc
                )
                source = EnrollmentSource(body.get("source", "live_capture"))
                entry = GalleryEntry(
                    person_id=person_id,
                    display_name=display_name,
                    poses=poses,
                    enrolled_at=int(body.get("enrolled_at", runtime.clock.now_ms())),
                    source=source,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise _ApiError(422, "invalid_poses", str(exc))
            runtime.store.add_entry(entry)  # GalleryInvalid -> 422 via dispatch
            self._reply_json(201, {"person_id": person_id, "gallery_size": len(runtime.store.gallery())})

        def _get_metrics(self) -> None:
            from .metrics import metrics_for_runtime

            self._reply_json(200, metrics_for_runtime(runtime))

        def _get_events(self) -> None:
            query = self._query()
            since: int | None = None
            if "since" in query:
                try:
                    since = int(query["since"][0])
                except ValueError:
                    raise _ApiError(400, "bad_filter", "since must be an integer")
            elif self.headers.get("Last-Event-ID"):
                try:
                    since = int(self.headers["Last-Event-ID"])
                except ValueError:
                    since = None
            sub = runtime.bus.subscribe(since=since)  # EventGone -> 410 via dispatch
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            try:
                while True:
                    event = sub.get(timeout=1.0)
                    if event is None:
                        if sub.closed:
                            break
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    chunk = (
                        f"id: {event.event_seq}\n"
                        f"event: {event.kind.value}\n"
                        f"data: {json.dumps(event.to_json())}\n\n"
                    )
                    self.wfile.write(chunk.encode("utf-8"))
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                sub.close()
                self.close_connection = True

        # -- console static files ---------------------------------------------

        def _console(self, path: str) -> None:
            root = runtime.config.console_dir
            if path == "/":
                self.send_response(HTTPStatus.TEMPORARY_REDIRECT)
                self.send_header("Location", "/console/")
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            if root is None:
                raise _ApiError(404, "no_console", "console_dir is not configured")
            rel = path[len("/console"):].lstrip("/") or "index.html"
            base = Path(root).resolve()
            target = (base / rel).resolve()
            if not str(target).startswith(str(base)) or not target.is_file():
                raise _ApiError(404, "not_found", f"no console file {rel!r}")
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", _CONTENT_TYPES.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(body)
            self.close_connection = True

    return Handler
