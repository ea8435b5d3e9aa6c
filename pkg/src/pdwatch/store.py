"""On-disk artifact store: IQ recordings, spectrum CSVs, append-only indexes.

Two JSONL indexes live under the data directory:

* ``events.jsonl``: one line per detected event (append-only; re-running a
  sweep never rewrites existing lines).
* ``sweeps.jsonl``: one line per sweep pointing at its stitched spectrum
  CSV, so the sync agent can ship full-band diagrams too.

Artifacts are always written before their index lines, so a tailing reader
never sees an event whose files are missing.  Readers must ignore a torn
final line (no trailing newline or invalid JSON); ``read_new_lines``
implements that rule and returns a resume offset.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .codec import write_iqf, write_spectrum_csv
from .sweep import PdEvent, SweepResult

EVENTS_INDEX = "events.jsonl"
SWEEPS_INDEX = "sweeps.jsonl"


def append_jsonl(path: str | Path, record: dict) -> None:
    line = json.dumps(record, separators=(",", ":"))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_new_lines(path: str | Path, offset: int = 0) -> tuple[list[dict], int]:
    """Complete JSON lines after byte offset; returns (records, new_offset).

    A torn final line (not newline-terminated, or not yet valid JSON) is left
    for the next call: the returned offset stops before it.
    """
    path = Path(path)
    if not path.exists():
        return [], offset
    records: list[dict] = []
    with open(path, "rb") as fh:
        fh.seek(offset)
        data = fh.read()
    pos = 0
    while True:
        newline = data.find(b"\n", pos)
        if newline < 0:
            break
        line = data[pos : newline]
        if line.strip():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                # a newline-terminated line is final: malformed means skip
                pass
        pos = newline + 1
    return records, offset + pos


def event_index_record(event: PdEvent, upload_state: str = "pending") -> dict:
    return {
        "event_id": event.event_id,
        "t0_unix_ms": event.t0_unix_ms,
        "peak_freq_hz": event.peak_freq_hz,
        "peak_power_dbm": event.peak_power_dbm,
        "threshold_dbm": event.threshold_dbm,
        "sweep_id": event.sweep_id,
        "window_index": event.window_index,
        "iq_path": event.iq_path,
        "spectrum_path": event.spectrum_path,
        "upload_state": upload_state,
    }


def _stitched_name(t_start_ms: int, sweep_id: str) -> str:
    dt = datetime.fromtimestamp(t_start_ms // 1000, tz=timezone.utc)
    return f"sweep_{dt:%Y%m%dT%H%M%S}.{t_start_ms % 1000:03d}Z_{sweep_id}_stitched.csv"


@dataclass
class PersistReport:
    sweep_id: str
    iq_paths: list[str]
    spectrum_paths: list[str]
    stitched_path: str | None
    events_appended: int


class ArtifactStore:
    """Writes sweep results under one data directory with a disk watermark.

    ``max_bytes`` is an optional high-water mark: when the directory grows
    past it the monitor pauses acquisition and raises its alarm state rather
    than dropping or overwriting data.
    """

    def __init__(self, data_dir: str | Path, max_bytes: int | None = None):
        # resolve so index records carry self-contained absolute paths no
        # matter what working directory the scan was launched from
        self.data_dir = Path(data_dir).resolve()
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.max_bytes = max_bytes
        self.events_index = self.data_dir / EVENTS_INDEX
        self.sweeps_index = self.data_dir / SWEEPS_INDEX

    def usage_bytes(self) -> int:
        return sum(p.stat().st_size for p in self.data_dir.rglob("*") if p.is_file())

    def over_watermark(self) -> bool:
        limit = self.max_bytes  # may be retargeted live by an operator
        return limit is not None and self.usage_bytes() >= limit

    def persist_sweep(self, result: SweepResult) -> PersistReport:
        """Write retained frames, per-event spectra, stitched CSV, index lines."""
        iq_paths: list[str] = []
        spectrum_paths: list[str] = []
        for capture in result.captures:
            write_iqf(capture.frame, capture.event.iq_path)
            write_spectrum_csv(capture.spectrum, capture.event.spectrum_path)
            iq_paths.append(capture.event.iq_path)
            spectrum_paths.append(capture.event.spectrum_path)

        stitched_path: str | None = None
        if result.stitched is not None:
            stitched_path = str(
                self.data_dir / _stitched_name(result.t_start_ms, result.sweep_id)
            )
            write_spectrum_csv(result.stitched, stitched_path)

        # index lines go last so tailing readers only see complete artifacts
        for event in result.events:
            append_jsonl(self.events_index, event_index_record(event))
        append_jsonl(
            self.sweeps_index,
            {
                "sweep_id": result.sweep_id,
                "t_start_ms": result.t_start_ms,
                "t_end_ms": result.t_end_ms,
                "stitched_path": stitched_path,
                "complete": result.complete,
                "n_events": len(result.events),
                "missing_windows": result.stitched.missing_windows
                if result.stitched
                else [],
            },
        )
        return PersistReport(
            sweep_id=result.sweep_id,
            iq_paths=iq_paths,
            spectrum_paths=spectrum_paths,
            stitched_path=stitched_path,
            events_appended=len(result.events),
        )
