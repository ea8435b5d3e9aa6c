"""Self-hosted remote store: ingest artifacts, list events, fire notifications.

HTTP/1.1 JSON API (stdlib http.server, threaded):

* ``PUT /artifacts/{event_id}/{filename}``: body is the artifact, headers
  carry the SHA-256 (``X-Content-Hash``) plus event metadata on first upload.
  Content-addressed and idempotent: re-uploading identical bytes is a no-op
  200; a different body for an existing name is a 409.
* ``GET /events?since=<unix ms>``: JSON array of events with t0 > since,
  newest last.
* ``GET /artifacts/{event_id}/{filename}``: raw bytes.
* ``GET /spectrum/latest``: most recent stitched spectrum CSV.
* ``POST /subscriptions``: register a webhook URL or outbox file; new
  events are delivered at-least-once with per-subscriber dedupe.
* ``GET /health``: liveness plus counters (never requires auth).

Optional static bearer token guards everything except /health.  Malformed
requests get a 400 with a machine-readable ``{"error": reason}`` body.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qs, urlparse

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")

EVENT_META_HEADERS = {
    "t0_unix_ms": "X-Event-T0-Ms",
    "peak_freq_hz": "X-Peak-Freq-Hz",
    "peak_power_dbm": "X-Peak-Power-Dbm",
    "threshold_dbm": "X-Threshold-Dbm",
    "sweep_id": "X-Sweep-Id",
    "window_index": "X-Window-Index",
}
STITCHED_HEADER = "X-Stitched"
HASH_HEADER = "X-Content-Hash"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _valid_name(name: str) -> bool:
    return bool(_NAME_RE.match(name)) and ".." not in name


@dataclass
class Subscriber:
    sub_id: str
    kind: str  # "webhook" | "outbox"
    target: str


@dataclass
class _NotifyTask:
    event_id: str
    sub_id: str
    attempts: int = 0
    next_due: float = 0.0


class Notifier:
    """At-least-once event delivery with per-(event, subscriber) dedupe.

    Failed deliveries retry with exponential backoff; after max_attempts the
    task lands in the dead-letter list.  Delivery state is persisted so a
    restarted server never re-notifies.
    """

    def __init__(
        self,
        state_path: Path,
        artifact_url: Callable[[str, str], str],
        backoff_base_s: float = 1.0,
        backoff_cap_s: float = 60.0,
        max_attempts: int = 10,
        timeout_s: float = 5.0,
    ):
        self.state_path = state_path
        self.artifact_url = artifact_url
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self.max_attempts = max_attempts
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = False
        self._inflight = 0
        self._tasks: list[_NotifyTask] = []
        self._delivered: set[tuple[str, str]] = set()
        self._dead: list[dict] = []
        self._events: dict[str, dict] = {}
        self._subscribers: dict[str, Subscriber] = {}
        self._load()
        self._thread = threading.Thread(target=self._run, name="pdwatch-notify", daemon=True)
        self._thread.start()

    def _load(self) -> None:
        if self.state_path.exists():
            state = json.loads(self.state_path.read_text())
            self._delivered = {tuple(x) for x in state.get("delivered", [])}
            self._dead = state.get("dead", [])

    def _save_locked(self) -> None:
        tmp = self.state_path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"delivered": sorted(self._delivered), "dead": self._dead})
        )
        tmp.replace(self.state_path)

    def set_subscribers(self, subs: dict[str, Subscriber]) -> None:
        with self._lock:
            self._subscribers = dict(subs)

    def enqueue_event(self, event: dict) -> None:
        with self._lock:
            self._events[event["event_id"]] = event
            for sub_id in self._subscribers:
                if (event["event_id"], sub_id) not in self._delivered:
                    self._tasks.append(_NotifyTask(event["event_id"], sub_id))
        self._wake.set()

    def delivered_count(self, event_id: str) -> int:
        with self._lock:
            return sum(1 for (eid, _sid) in self._delivered if eid == event_id)

    @property
    def dead_letters(self) -> list[dict]:
        with self._lock:
            return list(self._dead)

    def stop(self) -> None:
        self._stop = True
        self._wake.set()
        self._thread.join(timeout=5)

    def wait_idle(self, timeout_s: float) -> bool:
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            with self._lock:
                if not self._tasks and self._inflight == 0:
                    return True
            time.sleep(0.02)
        return False

    def _payload(self, event: dict) -> dict:
        return {
            "event_id": event["event_id"],
            "t0_unix_ms": event["t0_unix_ms"],
            "peak_freq_hz": event["peak_freq_hz"],
            "peak_power_dbm": event["peak_power_dbm"],
            "artifacts": [
                self.artifact_url(event["event_id"], name)
                for name in event.get("artifacts", [])
            ],
        }

    def _deliver(self, sub: Subscriber, event: dict) -> None:
        payload = self._payload(event)
        if sub.kind == "outbox":
            mhz = payload["peak_freq_hz"] / 1e6
            line = (
                f"PD event {payload['event_id']}: peak {mhz:.3f} MHz "
                f"at {payload['peak_power_dbm']:.3f} dBm "
                f"(t0={payload['t0_unix_ms']} ms); "
                f"artifacts: {', '.join(payload['artifacts'])}\n"
            )
            with open(sub.target, "a", encoding="utf-8") as fh:
                fh.write(line)
            return
        req = urllib.request.Request(
            sub.target,
            data=json.dumps(payload).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            if not (200 <= resp.status < 300):
                raise OSError(f"subscriber returned {resp.status}")

    def _run(self) -> None:
        while not self._stop:
            task = None
            now = time.monotonic()
            with self._lock:
                due = [t for t in self._tasks if t.next_due <= now]
                if due:
                    task = due[0]
                    self._tasks.remove(task)
                    self._inflight += 1
            if task is None:
                self._wake.wait(timeout=0.05)
                self._wake.clear()
                continue
            try:
                with self._lock:
                    sub = self._subscribers.get(task.sub_id)
                    event = self._events.get(task.event_id)
                    already = (task.event_id, task.sub_id) in self._delivered
                if sub is None or event is None or already:
                    continue
                try:
                    self._deliver(sub, event)
                except Exception as exc:
                    task.attempts += 1
                    if task.attempts >= self.max_attempts:
                        with self._lock:
                            self._dead.append(
                                {
                                    "event_id": task.event_id,
                                    "sub_id": task.sub_id,
                                    "attempts": task.attempts,
                                    "error": str(exc),
                                }
                            )
                            self._save_locked()
                    else:
                        delay = min(
                            self.backoff_cap_s, self.backoff_base_s * 2 ** (task.attempts - 1)
                        )
                        task.next_due = time.monotonic() + delay
                        with self._lock:
                            self._tasks.append(task)
                else:
                    with self._lock:
                        self._delivered.add((task.event_id, task.sub_id))
                        self._save_locked()
            finally:
                with self._lock:
                    self._inflight -= 1


class RemoteStore:
    """Disk-backed state behind the HTTP surface (thread-safe)."""

    def __init__(self, root: str | Path, notifier: Notifier | None = None):
        self.root = Path(root)
        (self.root / "artifacts").mkdir(parents=True, exist_ok=True)
        self.events_log = self.root / "events.jsonl"
        self.subs_path = self.root / "subscriptions.json"
        self.latest_path = self.root / "latest_spectrum.json"
        self._lock = threading.RLock()
        self._path_locks: dict[str, threading.Lock] = {}
        self._events: dict[str, dict] = {}
        self._order: list[str] = []
        self._subscribers: dict[str, Subscriber] = {}
        self._latest_spectrum: tuple[str, str] | None = None
        self.notifier = notifier
        self._load()

    def _load(self) -> None:
        if self.events_log.exists():
            for line in self.events_log.read_text().splitlines():
                if not line.strip():
                    continue
                try:
                    ev = json.loads(line)
                except json.JSONDecodeError:
                    continue
                self._events[ev["event_id"]] = ev
                self._order.append(ev["event_id"])
        if self.subs_path.exists():
            for entry in json.loads(self.subs_path.read_text()):
                sub = Subscriber(**entry)
                self._subscribers[sub.sub_id] = sub
        if self.latest_path.exists():
            owner, name = json.loads(self.latest_path.read_text())
            self._latest_spectrum = (owner, name)
        if self.notifier is not None:
            self.notifier.set_subscribers(self._subscribers)

    def _path_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._path_locks.setdefault(key, threading.Lock())

    def artifact_path(self, owner_id: str, filename: str) -> Path:
        return self.root / "artifacts" / owner_id / filename

    # -- ingest --------------------------------------------------------------

    def put_artifact(
        self,
        owner_id: str,
        filename: str,
        body: bytes,
        declared_hash: str,
        meta: dict | None,
        stitched: bool,
    ) -> tuple[int, dict]:
        actual = sha256_hex(body)
        if actual != declared_hash.lower():
            return 400, {"error": "hash_mismatch", "declared": declared_hash, "actual": actual}
        target = self.artifact_path(owner_id, filename)
        with self._path_lock(f"{owner_id}/{filename}"):
            if target.exists():
                existing = sha256_hex(target.read_bytes())
                if existing != actual:
                    return 409, {"error": "hash_conflict", "existing": existing}
                stored = False
            else:
                target.parent.mkdir(parents=True, exist_ok=True)
                tmp = target.with_name(target.name + ".tmp")
                tmp.write_bytes(body)
                tmp.replace(target)
                stored = True
        if meta is not None:
            self._register_event(owner_id, filename, meta)
        else:
            self._attach_artifact(owner_id, filename)
        if stitched:
            with self._lock:
                self._latest_spectrum = (owner_id, filename)
                self.latest_path.write_text(json.dumps(self._latest_spectrum))
        return 200, {"stored": stored, "deduped": not stored, "sha256": actual}

    def _register_event(self, event_id: str, filename: str, meta: dict) -> None:
        notify_event = None
        with self._lock:
            if event_id in self._events:
                ev = self._events[event_id]
                if filename not in ev["artifacts"]:
                    ev["artifacts"].append(filename)
            else:
                ev = dict(meta)
                ev["event_id"] = event_id
                ev["artifacts"] = [filename]
                ev["received_unix_ms"] = int(time.time() * 1000)
                self._events[event_id] = ev
                self._order.append(event_id)
                with open(self.events_log, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(ev, separators=(",", ":")) + "\n")
                notify_event = dict(ev)
        if notify_event is not None and self.notifier is not None:
            self.notifier.enqueue_event(notify_event)

    def _attach_artifact(self, owner_id: str, filename: str) -> None:
        with self._lock:
            ev = self._events.get(owner_id)
            if ev is not None and filename not in ev["artifacts"]:
                ev["artifacts"].append(filename)

    # -- queries --------------------------------------------------------------

    def list_events(self, since_ms: int | None) -> list[dict]:
        with self._lock:
            events = [dict(self._events[eid]) for eid in self._order]
        if since_ms is not None:
            events = [e for e in events if e.get("t0_unix_ms", 0) > since_ms]
        events.sort(key=lambda e: (e.get("t0_unix_ms", 0), e.get("received_unix_ms", 0)))
        return events

    def latest_spectrum(self) -> Path | None:
        with self._lock:
            if self._latest_spectrum is None:
                return None
            owner, name = self._latest_spectrum
        path = self.artifact_path(owner, name)
        return path if path.exists() else None

    def add_subscriber(self, kind: str, target: str) -> Subscriber:
        sub_id = hashlib.sha1(f"{kind}:{target}".encode()).hexdigest()[:12]
        sub = Subscriber(sub_id=sub_id, kind=kind, target=target)
        with self._lock:
            self._subscribers[sub_id] = sub
            self.subs_path.write_text(
                json.dumps([vars(s) for s in self._subscribers.values()])
            )
        if self.notifier is not None:
            self.notifier.set_subscribers(self._subscribers)
        return sub

    def counters(self) -> dict:
        with self._lock:
            n_artifacts = sum(1 for _ in (self.root / "artifacts").rglob("*") if _.is_file())
            return {
                "events": len(self._events),
                "artifacts": n_artifacts,
                "subscribers": len(self._subscribers),
            }


class RemoteStoreServer:
    """Threaded HTTP server wrapping a RemoteStore; bind port 0 for ephemeral."""

    def __init__(
        self,
        root: str | Path,
        host: str = "127.0.0.1",
        port: int = 0,
        token: str | None = None,
        console_dir: str | Path | None = None,
        notifier_backoff_s: float = 1.0,
        notifier_max_attempts: int = 10,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.token = token
        self.console_dir = Path(console_dir) if console_dir else None
        self._host = host
        self._bind_port = port
        self.notifier = Notifier(
            self.root / "notify_state.json",
            artifact_url=self._artifact_url,
            backoff_base_s=notifier_backoff_s,
            max_attempts=notifier_max_attempts,
        )
        self.store = RemoteStore(self.root, notifier=self.notifier)
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def _artifact_url(self, owner_id: str, filename: str) -> str:
        return f"http://{self._host}:{self.port}/artifacts/{owner_id}/{filename}"

    @property
    def port(self) -> int:
        if self._httpd is None:
            return self._bind_port
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._host}:{self.port}"

    def start(self) -> "RemoteStoreServer":
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer((self._host, self._bind_port), handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="pdwatch-remote", daemon=True
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
        self.notifier.stop()

    def __enter__(self) -> "RemoteStoreServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def _make_handler(server: RemoteStoreServer):
    store = server.store

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "pdwatch-remote/1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- plumbing ------------------------------------------------------

        def _send(self, status: int, body: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _json(self, status: int, payload: dict | list) -> None:
            self._send(status, json.dumps(payload).encode(), "application/json")

        def _bad(self, reason: str, status: int = 400) -> None:
            self._json(status, {"error": reason})

        def _authorized(self) -> bool:
            if server.token is None:
                return True
            return self.headers.get("Authorization", "") == f"Bearer {server.token}"

        def _read_body(self) -> bytes | None:
            length = self.headers.get("Content-Length")
            if length is None:
                return None
            try:
                return self.rfile.read(int(length))
            except ValueError:
                return None

        # -- verbs -----------------------------------------------------------

        def do_OPTIONS(self) -> None:
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "*")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self) -> None:
            parsed = urlparse(self.path)
            parts = [p for p in parsed.path.split("/") if p]
            if parsed.path == "/health":
                self._json(200, {"status": "ok", **store.counters()})
                return
            if not self._authorized():
                self._bad("unauthorized", 401)
                return
            if parsed.path == "/events":
                query = parse_qs(parsed.query)
                since: int | None = None
                if "since" in query:
                    try:
                        since = int(float(query["since"][0]))
                    except ValueError:
                        self._bad("since must be a unix-ms timestamp")
                        return
                self._json(200, store.list_events(since))
                return
            if parsed.path == "/spectrum/latest":
                path = store.latest_spectrum()
                if path is None:
                    self._bad("no stitched spectrum uploaded yet", 404)
                    return
                self._send(200, path.read_bytes(), "text/csv")
                return
            if len(parts) == 3 and parts[0] == "artifacts":
                _, owner_id, filename = parts
                if not (_valid_name(owner_id) and _valid_name(filename)):
                    self._bad("bad artifact path")
                    return
                path = store.artifact_path(owner_id, filename)
                if not path.exists():
                    self._bad("unknown artifact", 404)
                    return
                ctype = "text/csv" if filename.endswith(".csv") else "application/octet-stream"
                self._send(200, path.read_bytes(), ctype)
                return
            if server.console_dir is not None and parts and parts[0] == "console":
                rel = "/".join(parts[1:]) or "index.html"
                candidate = (server.console_dir / rel).resolve()
                if server.console_dir.resolve() in candidate.parents and candidate.is_file():
                    ctype = {
                        ".html": "text/html",
                        ".js": "text/javascript",
                        ".css": "text/css",
                    }.get(candidate.suffix, "application/octet-stream")
                    self._send(200, candidate.read_bytes(), ctype)
                    return
                self._bad("not found", 404)
                return
            self._bad("not_found", 404)

        def do_PUT(self) -> None:
            if not self._authorized():
                self._bad("unauthorized", 401)
                return
            parts = [p for p in urlparse(self.path).path.split("/") if p]
            if len(parts) != 3 or parts[0] != "artifacts":
                self._bad("PUT expects /artifacts/{event_id}/{filename}", 404)
                return
            _, owner_id, filename = parts
            if not (_valid_name(owner_id) and _valid_name(filename)):
                self._bad("bad artifact path")
                return
            declared = self.headers.get(HASH_HEADER)
            if not declared:
                self._bad(f"missing {HASH_HEADER} header")
                return
            body = self._read_body()
            if body is None:
                self._bad("missing body / Content-Length")
                return
            meta = None
            if self.headers.get(EVENT_META_HEADERS["t0_unix_ms"]) is not None:
                try:
                    meta = {
                        "t0_unix_ms": int(self.headers[EVENT_META_HEADERS["t0_unix_ms"]]),
                        "peak_freq_hz": float(self.headers[EVENT_META_HEADERS["peak_freq_hz"]]),
                        "peak_power_dbm": float(
                            self.headers[EVENT_META_HEADERS["peak_power_dbm"]]
                        ),
                        "threshold_dbm": float(
                            self.headers.get(EVENT_META_HEADERS["threshold_dbm"], "nan")
                        ),
                        "sweep_id": self.headers.get(EVENT_META_HEADERS["sweep_id"], ""),
                        "window_index": int(
                            self.headers.get(EVENT_META_HEADERS["window_index"], "0")
                        ),
                    }
                except (KeyError, ValueError, TypeError):
                    self._bad("malformed event metadata headers")
                    return
            stitched = self.headers.get(STITCHED_HEADER) == "1"
            status, payload = store.put_artifact(
                owner_id, filename, body, declared, meta, stitched
            )
            self._json(status, payload)

        def do_POST(self) -> None:
            if not self._authorized():
                self._bad("unauthorized", 401)
                return
            if urlparse(self.path).path != "/subscriptions":
                self._bad("not_found", 404)
                return
            body = self._read_body()
            if body is None:
                self._bad("missing body")
                return
            try:
                data = json.loads(body)
            except json.JSONDecodeError:
                self._bad("body must be JSON")
                return
            kind = data.get("kind")
            target = data.get("target")
            if kind not in ("webhook", "outbox") or not isinstance(target, str) or not target:
                self._bad("expected {kind: webhook|outbox, target: <url or path>}")
                return
            sub = store.add_subscriber(kind, target)
            self._json(200, {"id": sub.sub_id, "kind": kind, "target": target})

    return Handler
