"""Control endpoint exposed by a running scan (``pdwatch scan --control-bind``).

Lets the operator console adjust the live plan and pause/resume acquisition:

* ``GET /plan``: current plan, pending (staged) changes, run state, alarm.
* ``POST /plan {threshold_dbm?, span_hz?, step_hz?}``: stage changes; they
  apply atomically at the next sweep boundary.
* ``POST /stop`` / ``POST /start``: pause / resume sweeping (the process
  keeps running; shutdown stays with the CLI).
* ``GET /health``: liveness.

Thresholds are limited to [-120, 0] dBm here, mirroring the console's own
form validation.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlparse

from .errors import ConfigError
from .sweep import MonitorController

THRESHOLD_MIN_DBM = -120.0
THRESHOLD_MAX_DBM = 0.0

_CONTROL_FIELDS = ("threshold_dbm", "span_hz", "step_hz")


def validate_control_changes(data: dict) -> dict:
    """Validate a POST /plan body; returns the sanitized change set."""
    if not isinstance(data, dict):
        raise ConfigError("body must be a JSON object")
    unknown = set(data) - set(_CONTROL_FIELDS)
    if unknown:
        raise ConfigError(f"unknown plan fields {sorted(unknown)}")
    if not data:
        raise ConfigError("no plan changes given")
    changes = {}
    for name in _CONTROL_FIELDS:
        if name not in data:
            continue
        value = data[name]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{name} must be a number")
        value = float(value)
        if name == "threshold_dbm" and not (THRESHOLD_MIN_DBM <= value <= THRESHOLD_MAX_DBM):
            raise ConfigError(
                f"threshold_dbm must be within [{THRESHOLD_MIN_DBM}, {THRESHOLD_MAX_DBM}]"
            )
        if name in ("span_hz", "step_hz") and value <= 0:
            raise ConfigError(f"{name} must be > 0")
        changes[name] = value
    return changes


class ScanControlServer:
    """Tiny threaded HTTP server bound to a MonitorController."""

    def __init__(self, controller: MonitorController, host: str = "127.0.0.1", port: int = 0):
        self.controller = controller
        self._host = host
        self._bind_port = port
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1] if self._httpd else self._bind_port

    @property
    def url(self) -> str:
        return f"http://{self._host}:{self.port}"

    def start(self) -> "ScanControlServer":
        controller = self.controller

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass

            def _json(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def do_OPTIONS(self) -> None:
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "*")
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self) -> None:
                path = urlparse(self.path).path
                if path == "/health":
                    self._json(200, {"status": "ok"})
                elif path == "/plan":
                    self._json(200, controller.plan_view())
                else:
                    self._json(404, {"error": "not_found"})

            def do_POST(self) -> None:
                path = urlparse(self.path).path
                if path == "/stop":
                    controller.stop()
                    self._json(200, {"running": False})
                    return
                if path == "/start":
                    controller.start()
                    self._json(200, {"running": True})
                    return
                if path != "/plan":
                    self._json(404, {"error": "not_found"})
                    return
                length = self.headers.get("Content-Length")
                if length is None:
                    self._json(400, {"error": "missing body"})
                    return
                try:
                    data = json.loads(self.rfile.read(int(length)))
                    changes = validate_control_changes(data)
                    controller.stage(**changes)
                except (json.JSONDecodeError, ValueError) as exc:
                    self._json(400, {"error": f"invalid JSON: {exc}"})
                    return
                except ConfigError as exc:
                    self._json(400, {"error": str(exc)})
                    return
                self._json(200, {"status": "staged", "applies": "next_sweep", "changes": changes})

        self._httpd = ThreadingHTTPServer((self._host, self._bind_port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="pdwatch-control", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
