"""Sweep orchestration: plan tuned windows, drive the device, detect events.

One sweep visits every planned window in order (tune, acquire, spectrum,
peak, classify), records a PdEvent per above-threshold window, keeps those
windows' IQ frames and discards the rest, and stitches the per-window
spectra into one full-band diagram.  ``run_monitor`` repeats sweeps
back-to-back, persisting artifacts through a store behind a bounded queue
(acquisition stalls rather than dropping frames if persistence lags).

Per-window log lines mirror the scan console format::

    cumulative: 72927, current: 999 >>> cf MHz= 760.000 , span MHz= 20.000 ,
    [ max MHz= 767.996 , max dBm= -35.704 ] ...THRESHOLD

where the counters are monotone spectrum-batch counts (current = segments
averaged in this window, cumulative = running total).
"""

from __future__ import annotations

import math
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .dsp import (
    Classification,
    IqFrame,
    PowerSpectrum,
    classify,
    peak_search,
    spectrum_from_frame,
)
from .errors import ConfigError, EmptySweepError, PdWatchError

DEFAULT_F_START_HZ = 100e6
DEFAULT_F_STOP_HZ = 2500e6
DEFAULT_STEP_HZ = 40e6
DEFAULT_SPAN_HZ = 40e6
DEFAULT_DWELL_S = 0.010
DEFAULT_THRESHOLD_DBM = -50.0
DEFAULT_SWEEP_PERIOD_S = 0.600

# plan fields that may be changed between sweeps via the control surface
LIVE_PLAN_FIELDS = (
    "threshold_dbm",
    "span_hz",
    "step_hz",
    "f_start_hz",
    "f_stop_hz",
    "dwell_s",
    "n_fft",
)


@dataclass(frozen=True)
class SweepPlan:
    f_start_hz: float = DEFAULT_F_START_HZ
    f_stop_hz: float = DEFAULT_F_STOP_HZ
    step_hz: float = DEFAULT_STEP_HZ
    span_hz: float = DEFAULT_SPAN_HZ
    dwell_s: float = DEFAULT_DWELL_S
    threshold_dbm: float = DEFAULT_THRESHOLD_DBM
    n_fft: int = 8192
    window_fn: str = "rect"
    sweep_period_target_s: float = DEFAULT_SWEEP_PERIOD_S

    def __post_init__(self) -> None:
        if not self.f_start_hz < self.f_stop_hz:
            raise ConfigError("f_start_hz must be < f_stop_hz")
        if self.step_hz <= 0:
            raise ConfigError("step_hz must be > 0")
        if self.span_hz <= 0:
            raise ConfigError("span_hz must be > 0")
        if self.dwell_s <= 0:
            raise ConfigError("dwell_s must be > 0")
        if not math.isfinite(self.threshold_dbm):
            raise ConfigError("threshold_dbm must be finite")
        if self.n_fft < 2 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise ConfigError("n_fft must be a power of two >= 2")
        if self.window_fn not in ("rect", "hann"):
            raise ConfigError(f"window_fn must be rect or hann, got {self.window_fn!r}")
        if self.sweep_period_target_s < 0:
            raise ConfigError("sweep_period_target_s must be >= 0")

    @property
    def window_count(self) -> int:
        return int(math.floor((self.f_stop_hz - self.f_start_hz) / self.step_hz + 1e-9)) + 1


@dataclass(frozen=True)
class TunedWindow:
    index: int
    center_freq_hz: float


def plan_windows(plan: SweepPlan) -> list[TunedWindow]:
    """Ordered window centers: f_start, f_start+step, ... <= f_stop."""
    return [
        TunedWindow(index=i, center_freq_hz=plan.f_start_hz + i * plan.step_hz)
        for i in range(plan.window_count)
    ]


@dataclass
class PdEvent:
    event_id: str
    t0_unix_ms: int
    peak_freq_hz: float
    peak_power_dbm: float
    window_index: int
    sweep_id: str
    threshold_dbm: float
    iq_path: str
    spectrum_path: str


@dataclass(frozen=True)
class ArtifactPaths:
    iq_path: Path
    spectrum_path: Path


def artifact_basename(t0_unix_ms: int, peak_freq_hz: float) -> str:
    """pd_<UTC timestamp, ms>_<peak freq rounded to kHz> stem."""
    dt = datetime.fromtimestamp(t0_unix_ms // 1000, tz=timezone.utc)
    return (
        f"pd_{dt:%Y%m%dT%H%M%S}.{t0_unix_ms % 1000:03d}Z_"
        f"{round(peak_freq_hz / 1000.0)}kHz"
    )


def name_artifacts(
    t0_unix_ms: int, peak_freq_hz: float, data_dir: str | Path | None = None
) -> ArtifactPaths:
    """Deterministic artifact paths for an event under the data directory."""
    base = artifact_basename(t0_unix_ms, peak_freq_hz)
    root = Path(data_dir) if data_dir is not None else Path(".")
    return ArtifactPaths(
        iq_path=root / f"{base}.iqf",
        spectrum_path=root / f"{base}_spectrum.csv",
    )


@dataclass
class StitchedSpectrum:
    """Per-window slices trimmed to disjoint ranges covering the sweep band."""

    sweep_id: str
    t_start_ms: int
    t_end_ms: int
    segments: list[PowerSpectrum]
    complete: bool = True
    missing_windows: list[int] = field(default_factory=list)

    @property
    def freqs(self) -> np.ndarray:
        return np.concatenate([s.bin_freqs for s in self.segments])

    @property
    def power_dbm(self) -> np.ndarray:
        return np.concatenate([s.power_dbm for s in self.segments])

    @property
    def n_bins(self) -> int:
        return sum(s.bin_freqs.size for s in self.segments)


def stitch(
    slices: list[PowerSpectrum],
    plan: SweepPlan,
    sweep_id: str = "",
    t_start_ms: int = 0,
    t_end_ms: int = 0,
    complete: bool = True,
    missing_windows: Optional[list[int]] = None,
) -> StitchedSpectrum:
    """Combine per-window spectra into one sorted full-band axis.

    With span == step, slices are trimmed to [center - span/2, center +
    span/2) and concatenated edge to edge.  With span > step each frequency
    is assigned to the slice whose planned center is nearest (ties to the
    lower window index), so overlapped regions are covered exactly once.
    """
    if not slices:
        raise EmptySweepError("no spectrum slices to stitch")
    ordered = sorted(slices, key=lambda s: s.window_index)
    overlap = plan.span_hz > plan.step_hz * (1 + 1e-12)
    segments: list[PowerSpectrum] = []
    for s in ordered:
        f = s.bin_freqs
        tol = s.bin_width_hz * 1e-6 if s.bin_width_hz else 1e-6
        center = plan.f_start_hz + s.window_index * plan.step_hz
        half = plan.span_hz / 2.0
        if overlap:
            pos = (f - plan.f_start_hz) / plan.step_hz
            nearest = np.ceil(pos - 0.5 - 1e-9).astype(int)
            np.clip(nearest, 0, plan.window_count - 1, out=nearest)
            mask = (nearest == s.window_index) & (np.abs(f - center) <= half + tol)
        else:
            mask = (f >= center - half - tol) & (f < center + half - tol)
        if not mask.any():
            continue
        segments.append(
            PowerSpectrum(
                window_index=s.window_index,
                center_freq_hz=s.center_freq_hz,
                bin_freqs=f[mask],
                power_dbm=s.power_dbm[mask],
                n_fft=s.n_fft,
                n_avg=s.n_avg,
            )
        )
    if not segments:
        raise EmptySweepError("stitch produced no bins (span/step mismatch?)")
    return StitchedSpectrum(
        sweep_id=sweep_id,
        t_start_ms=t_start_ms,
        t_end_ms=t_end_ms,
        segments=segments,
        complete=complete,
        missing_windows=list(missing_windows or []),
    )


@dataclass
class WindowReport:
    window_index: int
    center_freq_hz: float
    span_hz: float
    peak_freq_hz: Optional[float]
    peak_power_dbm: Optional[float]
    classification: Optional[Classification]
    n_avg: int
    error: Optional[str] = None


def format_window_line(report: WindowReport, cumulative: int, current: int) -> str:
    if report.error is not None:
        return (
            f"cumulative: {cumulative}, current: {current} >>> "
            f"cf MHz= {report.center_freq_hz / 1e6:.3f} , window failed: {report.error}"
        )
    label = report.classification.value if report.classification else "noise"
    return (
        f"cumulative: {cumulative}, current: {current} >>> "
        f"cf MHz= {report.center_freq_hz / 1e6:.3f} , "
        f"span MHz= {report.span_hz / 1e6:.3f} , "
        f"[ max MHz= {report.peak_freq_hz / 1e6:.3f} , "
        f"max dBm= {report.peak_power_dbm:.3f} ] ...{label}"
    )


@dataclass
class Capture:
    """An event together with the frame and spectrum it came from."""

    event: PdEvent
    frame: IqFrame
    spectrum: PowerSpectrum


@dataclass
class SweepResult:
    sweep_id: str
    plan: SweepPlan
    events: list[PdEvent]
    captures: list[Capture]
    stitched: Optional[StitchedSpectrum]
    reports: list[WindowReport]
    failures: list[tuple[int, str]]
    t_start_ms: int
    t_end_ms: int
    duration_s: float
    complete: bool

    @property
    def frames_retained(self) -> int:
        return len(self.captures)


def _system_clock_ms() -> int:
    return int(time.time() * 1000)


def run_sweep(
    plan: SweepPlan,
    device,
    clock: Callable[[], int] | None = None,
    sweep_id: str | None = None,
    data_dir: str | Path | None = None,
    should_stop: Callable[[], bool] | None = None,
    on_window: Callable[[WindowReport], None] | None = None,
) -> SweepResult:
    """One scanning iteration over all planned windows.

    A window that raises is recorded as a stitch gap plus a failure entry
    and the sweep continues.  When should_stop turns true between windows
    the sweep returns early with complete=False and whatever was gathered.
    """
    clock = clock or _system_clock_ms
    sweep_id = sweep_id or uuid.uuid4().hex[:12]
    if hasattr(device, "set_span") and device.config.span_hz != plan.span_hz:
        device.set_span(plan.span_hz)
    windows = plan_windows(plan)
    wall_start = time.perf_counter()
    t_start_ms = clock()
    last_t0 = t_start_ms

    slices: list[PowerSpectrum] = []
    captures: list[Capture] = []
    reports: list[WindowReport] = []
    failures: list[tuple[int, str]] = []
    complete = True

    for window in windows:
        if should_stop is not None and should_stop():
            complete = False
            break
        try:
            device.tune(window.center_freq_hz)
            t0 = max(clock(), last_t0)
            last_t0 = t0
            frame = device.acquire(plan.dwell_s, t0, window_index=window.index)
            spectrum = spectrum_from_frame(frame, plan.n_fft, plan.window_fn)
            peak_freq, peak_power = peak_search(spectrum)
            label = classify(peak_power, plan.threshold_dbm)
        except (PdWatchError, ValueError, OSError) as exc:
            failures.append((window.index, str(exc)))
            report = WindowReport(
                window_index=window.index,
                center_freq_hz=window.center_freq_hz,
                span_hz=plan.span_hz,
                peak_freq_hz=None,
                peak_power_dbm=None,
                classification=None,
                n_avg=0,
                error=f"window {window.index} @ {window.center_freq_hz / 1e6:.3f} MHz: {exc}",
            )
            reports.append(report)
            if on_window is not None:
                on_window(report)
            continue

        slices.append(spectrum)
        report = WindowReport(
            window_index=window.index,
            center_freq_hz=window.center_freq_hz,
            span_hz=plan.span_hz,
            peak_freq_hz=peak_freq,
            peak_power_dbm=peak_power,
            classification=label,
            n_avg=spectrum.n_avg,
        )
        reports.append(report)
        if label is Classification.THRESHOLD:
            paths = name_artifacts(frame.t0_unix_ms, peak_freq, data_dir)
            event = PdEvent(
                event_id=uuid.uuid4().hex,
                t0_unix_ms=frame.t0_unix_ms,
                peak_freq_hz=peak_freq,
                peak_power_dbm=peak_power,
                window_index=window.index,
                sweep_id=sweep_id,
                threshold_dbm=plan.threshold_dbm,
                iq_path=str(paths.iq_path),
                spectrum_path=str(paths.spectrum_path),
            )
            captures.append(Capture(event=event, frame=frame, spectrum=spectrum))
        if on_window is not None:
            on_window(report)

    t_end_ms = clock()
    done_indices = {s.window_index for s in slices}
    missing = [w.index for w in windows if w.index not in done_indices]
    stitched: Optional[StitchedSpectrum] = None
    if slices:
        stitched = stitch(
            slices,
            plan,
            sweep_id=sweep_id,
            t_start_ms=t_start_ms,
            t_end_ms=t_end_ms,
            complete=complete and not failures,
            missing_windows=missing,
        )
    return SweepResult(
        sweep_id=sweep_id,
        plan=plan,
        events=[c.event for c in captures],
        captures=captures,
        stitched=stitched,
        reports=reports,
        failures=failures,
        t_start_ms=t_start_ms,
        t_end_ms=t_end_ms,
        duration_s=time.perf_counter() - wall_start,
        complete=complete,
    )


class MonitorController:
    """Shared control surface for a running monitor loop.

    Plan changes staged here are applied atomically at the next sweep
    boundary; stop/start pause and resume acquisition; request_shutdown ends
    the loop.  All methods are thread-safe (the control HTTP endpoint calls
    them from handler threads).
    """

    def __init__(self, plan: SweepPlan):
        self._lock = threading.Lock()
        self._plan = plan
        self._pending: dict = {}
        self._shutdown = threading.Event()
        self._running = True
        self.alarm: Optional[str] = None

    # -- lifecycle ----------------------------------------------------------

    def request_shutdown(self) -> None:
        self._shutdown.set()

    @property
    def shutdown_requested(self) -> bool:
        return self._shutdown.is_set()

    def wait_shutdown(self, timeout: float) -> bool:
        return self._shutdown.wait(timeout)

    def stop(self) -> None:
        with self._lock:
            self._running = False

    def start(self) -> None:
        with self._lock:
            self._running = True

    @property
    def running(self) -> bool:
        with self._lock:
            return self._running

    # -- plan updates --------------------------------------------------------

    def stage(self, **changes) -> SweepPlan:
        """Stage plan changes; validated now, applied at the sweep boundary."""
        unknown = set(changes) - set(LIVE_PLAN_FIELDS)
        if unknown:
            raise ConfigError(f"cannot change plan fields {sorted(unknown)} live")
        with self._lock:
            candidate = dict(self._pending)
            candidate.update(changes)
            new_plan = replace(self._plan, **candidate)  # raises ConfigError if bad
            self._pending = candidate
            return new_plan

    def take_plan(self) -> SweepPlan:
        """Current plan with staged changes applied (call at sweep boundaries)."""
        with self._lock:
            if self._pending:
                self._plan = replace(self._plan, **self._pending)
                self._pending = {}
            return self._plan

    def plan_view(self) -> dict:
        with self._lock:
            view = {name: getattr(self._plan, name) for name in LIVE_PLAN_FIELDS}
            view["window_fn"] = self._plan.window_fn
            view["sweep_period_target_s"] = self._plan.sweep_period_target_s
            view["running"] = self._running
            view["alarm"] = self.alarm
            view["pending"] = dict(self._pending) if self._pending else None
            return view


class _PersistWorker:
    """Single writer thread behind a bounded queue (backpressure, no drops)."""

    def __init__(self, store, maxsize: int = 2):
        self.store = store
        self.queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self.error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._run, name="pdwatch-persist", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while True:
            item = self.queue.get()
            if item is None:
                return
            try:
                self.store.persist_sweep(item)
            except BaseException as exc:  # surfaced to the monitor loop
                self.error = exc
                return

    def submit(self, result: SweepResult) -> None:
        if self.error is not None:
            raise self.error
        self.queue.put(result)  # blocks when full: acquisition stalls

    def close(self) -> None:
        self.queue.put(None)
        self._thread.join()
        if self.error is not None:
            raise self.error


def run_monitor(
    plan: SweepPlan,
    device,
    store=None,
    iterations: int | None = None,
    controller: MonitorController | None = None,
    clock: Callable[[], int] | None = None,
    on_line: Callable[[str], None] | None = None,
    poll_s: float = 0.05,
) -> Iterator[SweepResult]:
    """Run sweeps back to back, persisting each result through the store.

    Yields every SweepResult (a result is durably persisted before the next
    sweep finishes; the generator drains the persistence queue on exit).
    Honors the controller: pause/resume and staged plan changes at sweep
    boundaries, shutdown between windows within one dwell, and a store-full
    alarm that pauses acquisition until space frees up.
    """
    controller = controller or MonitorController(plan)
    persister = _PersistWorker(store) if store is not None else None
    cumulative = 0

    def emit(report: WindowReport) -> None:
        nonlocal cumulative
        if on_line is None:
            return
        current = report.n_avg
        cumulative += current
        on_line(format_window_line(report, cumulative, current))

    done = 0
    try:
        while not controller.shutdown_requested and (iterations is None or done < iterations):
            if not controller.running:
                controller.wait_shutdown(poll_s)
                continue
            if store is not None and store.over_watermark():
                controller.alarm = (
                    f"store full: {store.usage_bytes()} bytes >= {store.max_bytes} watermark"
                )
                controller.wait_shutdown(max(poll_s, plan.dwell_s))
                continue
            controller.alarm = None
            current_plan = controller.take_plan()
            result = run_sweep(
                current_plan,
                device,
                clock=clock,
                data_dir=store.data_dir if store is not None else None,
                should_stop=lambda: controller.shutdown_requested or not controller.running,
                on_window=emit,
            )
            if persister is not None:
                persister.submit(result)
            yield result
            done += 1
            spare = current_plan.sweep_period_target_s - result.duration_s
            if result.complete and spare > 0:
                controller.wait_shutdown(spare)
    finally:
        if persister is not None:
            persister.close()
