"""Local sync agent: tail the event index, push artifacts to the remote store.

At-least-once with server-side dedupe: every artifact is content-addressed
(SHA-256 computed before the first upload attempt) and the server treats an
identical re-upload as a no-op, so agent crashes and retries can only cause
harmless duplicate PUTs, never duplicate events.

All agent state (index cursors plus per-record upload state) lives in one
JSON file written atomically after every mutation, so the agent can be
killed at any instant and resume where it left off.  Record states only move
forward: pending -> uploaded -> acked.

Tests can inject ``fault_hook``, a callable invoked at named checkpoints
(ingest/save/upload boundaries); raising from it simulates a hard kill at
that point.
"""

from __future__ import annotations

import json
import random
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import PdWatchError
from .remote import EVENT_META_HEADERS, HASH_HEADER, STITCHED_HEADER, sha256_hex
from .store import read_new_lines

STATE_PENDING = "pending"
STATE_UPLOADED = "uploaded"
STATE_ACKED = "acked"

_STATE_ORDER = {STATE_PENDING: 0, STATE_UPLOADED: 1, STATE_ACKED: 2}


class RemoteUnavailable(PdWatchError):
    """Transport-level failure talking to the remote store."""


class AgentCrash(RuntimeError):
    """Raised by test fault hooks to simulate a hard kill."""


@dataclass
class SyncRecord:
    owner_id: str  # event_id, or sweep_id for stitched spectra
    filename: str
    path: str
    kind: str = "event"  # "event" | "sweep"
    content_hash: str = ""
    bytes: int = 0
    state: str = STATE_PENDING
    attempts: int = 0
    last_error: Optional[str] = None
    next_due_unix: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.owner_id}/{self.filename}"

    def advance(self, new_state: str) -> None:
        if _STATE_ORDER[new_state] < _STATE_ORDER[self.state]:
            raise ValueError(f"sync state may not regress: {self.state} -> {new_state}")
        self.state = new_state


class RemoteClient:
    """Thin HTTP client for the remote store API."""

    def __init__(self, base_url: str, token: str | None = None, timeout_s: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout_s = timeout_s

    def _headers(self, extra: dict | None = None) -> dict:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        if extra:
            headers.update(extra)
        return headers

    def _request(self, method: str, path: str, body: bytes | None = None, headers=None):
        req = urllib.request.Request(
            self.base_url + path, data=body, headers=self._headers(headers), method=method
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.status, json.loads(resp.read() or b"null")
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read() or b"null")
            except json.JSONDecodeError:
                payload = {"error": "unparseable response"}
            return exc.code, payload
        except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as exc:
            raise RemoteUnavailable(str(exc)) from exc

    def put_artifact(
        self,
        owner_id: str,
        filename: str,
        body: bytes,
        content_hash: str,
        meta: dict | None = None,
        stitched: bool = False,
    ) -> tuple[int, dict]:
        headers = {HASH_HEADER: content_hash, "Content-Type": "application/octet-stream"}
        if meta:
            for key, header in EVENT_META_HEADERS.items():
                if key in meta and meta[key] is not None:
                    headers[header] = str(meta[key])
        if stitched:
            headers[STITCHED_HEADER] = "1"
        return self._request("PUT", f"/artifacts/{owner_id}/{filename}", body, headers)

    def get_events(self, since_ms: int | None = None) -> list[dict]:
        path = "/events" if since_ms is None else f"/events?since={since_ms}"
        status, payload = self._request("GET", path)
        if status != 200:
            raise RemoteUnavailable(f"GET /events returned {status}: {payload}")
        return payload

    def get_bytes(self, path: str) -> tuple[int, bytes]:
        """Raw GET for artifact/spectrum bodies."""
        req = urllib.request.Request(self.base_url + path, headers=self._headers(), method="GET")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read()
        except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as exc:
            raise RemoteUnavailable(str(exc)) from exc

    def get_health(self) -> dict:
        status, payload = self._request("GET", "/health")
        if status != 200:
            raise RemoteUnavailable(f"GET /health returned {status}")
        return payload

    def post_subscription(self, kind: str, target: str) -> dict:
        body = json.dumps({"kind": kind, "target": target}).encode()
        status, payload = self._request(
            "POST", "/subscriptions", body, {"Content-Type": "application/json"}
        )
        if status != 200:
            raise RemoteUnavailable(f"POST /subscriptions returned {status}: {payload}")
        return payload


class SyncAgent:
    """Watcher + uploader pool over durable state.

    One agent owns one state file.  ``run_once`` performs a single
    ingest-and-upload pass (used by tests and the polling loop alike);
    ``run`` loops until stopped.
    """

    def __init__(
        self,
        index_path: str | Path,
        state_path: str | Path,
        client: RemoteClient,
        sweeps_index_path: str | Path | None = None,
        backoff_base_s: float = 1.0,
        backoff_cap_s: float = 60.0,
        jitter_frac: float = 0.1,
        parallelism: int = 4,
        poll_interval_s: float = 0.5,
        fault_hook: Callable[[str], None] | None = None,
    ):
        self.index_path = Path(index_path)
        self.sweeps_index_path = Path(sweeps_index_path) if sweeps_index_path else None
        self.state_path = Path(state_path)
        self.client = client
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self.jitter_frac = jitter_frac
        self.parallelism = max(1, parallelism)
        self.poll_interval_s = poll_interval_s
        self.fault_hook = fault_hook or (lambda point: None)
        self._lock = threading.Lock()
        self._rand = random.Random()
        self.cursor_events = 0
        self.cursor_sweeps = 0
        self.records: dict[str, SyncRecord] = {}
        self._load_state()

    # -- durable state -------------------------------------------------------

    def _load_state(self) -> None:
        if not self.state_path.exists():
            return
        state = json.loads(self.state_path.read_text())
        self.cursor_events = state.get("cursor_events", 0)
        self.cursor_sweeps = state.get("cursor_sweeps", 0)
        self.records = {
            key: SyncRecord(**rec) for key, rec in state.get("records", {}).items()
        }

    def _save_state(self) -> None:
        with self._lock:
            state = {
                "cursor_events": self.cursor_events,
                "cursor_sweeps": self.cursor_sweeps,
                "records": {key: asdict(rec) for key, rec in self.records.items()},
            }
            tmp = self.state_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(state))
            tmp.replace(self.state_path)
        self.fault_hook("state_saved")

    # -- ingest ----------------------------------------------------------------

    def _resolve(self, raw_path: str, index_path: Path) -> Path:
        p = Path(raw_path)
        return p if p.is_absolute() else index_path.parent / p

    def _add_record(self, owner_id: str, raw_path: str, kind: str, meta: dict) -> bool:
        path = self._resolve(raw_path, self.index_path)
        rec = SyncRecord(
            owner_id=owner_id,
            filename=path.name,
            path=str(path),
            kind=kind,
            meta=meta,
        )
        if rec.key in self.records:
            return False
        try:
            body = path.read_bytes()
            rec.content_hash = sha256_hex(body)
            rec.bytes = len(body)
        except OSError as exc:
            rec.last_error = f"unreadable artifact: {exc}"
            rec.next_due_unix = time.time() + self.backoff_base_s
        self.records[rec.key] = rec
        return True

    def ingest_new(self) -> int:
        """Tail both indexes from the persisted cursors; returns new records."""
        self.fault_hook("ingest")
        added = 0
        events, offset = read_new_lines(self.index_path, self.cursor_events)
        for ev in events:
            meta = {
                "t0_unix_ms": ev.get("t0_unix_ms"),
                "peak_freq_hz": ev.get("peak_freq_hz"),
                "peak_power_dbm": ev.get("peak_power_dbm"),
                "threshold_dbm": ev.get("threshold_dbm"),
                "sweep_id": ev.get("sweep_id"),
                "window_index": ev.get("window_index", 0),
            }
            for path_key in ("iq_path", "spectrum_path"):
                if ev.get(path_key):
                    added += self._add_record(ev["event_id"], ev[path_key], "event", meta)
        self.cursor_events = offset
        if self.sweeps_index_path is not None:
            sweeps, s_offset = read_new_lines(self.sweeps_index_path, self.cursor_sweeps)
            for sw in sweeps:
                if sw.get("stitched_path"):
                    added += self._add_record(sw["sweep_id"], sw["stitched_path"], "sweep", {})
            self.cursor_sweeps = s_offset
        if added or events:
            self._save_state()
        return added

    # -- upload ------------------------------------------------------------------

    def _backoff_delay(self, attempts: int) -> float:
        delay = min(self.backoff_cap_s, self.backoff_base_s * 2 ** max(0, attempts - 1))
        return delay + self._rand.uniform(0, self.jitter_frac * delay)

    def due_records(self) -> list[SyncRecord]:
        now = time.time()
        return [
            rec
            for rec in self.records.values()
            if rec.state != STATE_ACKED and rec.next_due_unix <= now
        ]

    def upload_record(self, rec: SyncRecord) -> bool:
        """One upload attempt; returns True when the record reaches acked."""
        try:
            body = Path(rec.path).read_bytes()
        except OSError as exc:
            rec.last_error = f"unreadable artifact: {exc}"
            rec.next_due_unix = time.time() + self._backoff_delay(rec.attempts + 1)
            self._save_state()
            return False
        if not rec.content_hash:
            rec.content_hash = sha256_hex(body)
            rec.bytes = len(body)
        rec.attempts += 1
        self.fault_hook("pre_upload")
        try:
            status, payload = self.client.put_artifact(
                rec.owner_id,
                rec.filename,
                body,
                rec.content_hash,
                meta=rec.meta if rec.kind == "event" else None,
                stitched=rec.kind == "sweep",
            )
        except RemoteUnavailable as exc:
            rec.last_error = str(exc)
            rec.next_due_unix = time.time() + self._backoff_delay(rec.attempts)
            self._save_state()
            return False
        self.fault_hook("post_upload")
        if status == 200 and payload.get("sha256") == rec.content_hash:
            rec.advance(STATE_UPLOADED)
            rec.advance(STATE_ACKED)
            rec.last_error = None
            self._save_state()
            return True
        rec.last_error = f"server returned {status}: {payload}"
        rec.next_due_unix = time.time() + self._backoff_delay(rec.attempts)
        self._save_state()
        return False

    def upload_due(self) -> int:
        due = self.due_records()
        if not due:
            return 0
        acked = 0
        if self.parallelism == 1 or len(due) == 1:
            for rec in due:
                if self.upload_record(rec):
                    acked += 1
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                for ok in pool.map(self.upload_record, due):
                    acked += bool(ok)
        return acked

    # -- loop ----------------------------------------------------------------------

    def run_once(self) -> bool:
        """One ingest + upload pass; returns whether any work happened."""
        added = self.ingest_new()
        uploaded = self.upload_due()
        return bool(added or uploaded)

    def pending_count(self) -> int:
        return sum(1 for rec in self.records.values() if rec.state != STATE_ACKED)

    def all_acked(self) -> bool:
        return self.pending_count() == 0

    def run(self, stop: threading.Event | None = None, max_cycles: int | None = None) -> None:
        cycles = 0
        while stop is None or not stop.is_set():
            did_work = self.run_once()
            cycles += 1
            if max_cycles is not None and cycles >= max_cycles:
                return
            if not did_work:
                if stop is not None:
                    stop.wait(self.poll_interval_s)
                else:
                    time.sleep(self.poll_interval_s)
