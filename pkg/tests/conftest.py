"""Shared fixtures and oracles for the pdwatch test suite."""

from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from pdwatch.device import FrontEndConfig, SimulatedFrontEnd
from pdwatch.dsp import IqFrame, power_dbm
from pdwatch.scene import CwTone, EmitterScene


def tone_source_dbm(amplitude_v: float) -> float:
    """Closed-form tone power: A^2/(2*50 ohm) in dBm."""
    return 10.0 * math.log10((amplitude_v ** 2 / 100.0) / 1e-3)


def tone_scene(
    freq_hz: float,
    received_dbm: float,
    amplitude_v: float = 0.5,
    seed: int = 1,
    noise_density_dbm_hz: float = -174.0,
) -> EmitterScene:
    """Scene with one CW tone attenuated to land at received_dbm."""
    attenuation = tone_source_dbm(amplitude_v) - received_dbm
    return EmitterScene(
        emitters=(
            CwTone(freq_hz=freq_hz, amplitude_v=amplitude_v, attenuation_db=attenuation),
        ),
        noise_density_dbm_hz=noise_density_dbm_hz,
        seed=seed,
    )


def desk_frontend(
    iq_rate_hz: float = 4e6,
    span_hz: float | None = None,
    full_scale_v: float = 0.02,
) -> FrontEndConfig:
    return FrontEndConfig(
        iq_rate_hz=iq_rate_hz,
        span_hz=span_hz if span_hz is not None else iq_rate_hz,
        full_scale_v=full_scale_v,
    )


def random_frame(rng: np.random.Generator, max_samples: int = 500) -> IqFrame:
    """Randomized frame with header values on the codec's storable grids."""
    n = int(rng.integers(1, max_samples + 1))
    iq_rate = float(rng.integers(1_000_000, 100_000_000))
    return IqFrame(
        center_freq_hz=float(rng.integers(1, 3_000_000_000)),
        span_hz=float(rng.integers(1, int(iq_rate) + 1)),
        iq_rate_hz=iq_rate,
        t0_unix_ms=int(rng.integers(-(2 ** 40), 2 ** 40)),
        samples=rng.integers(-32768, 32768, size=(n, 2), dtype=np.int16),
        adc_bits=int(rng.integers(8, 17)),
        full_scale_v=int(rng.integers(1, 5_000_000)) / 1e6,
        cal_constant=int(rng.integers(1, 2_000_000)) / 1e6,
    )


class RecordingWebhook:
    """Tiny HTTP sink that can fail the first N posts per event."""

    def __init__(self, fail_first: int = 0):
        self.fail_first = fail_first
        self.lock = threading.Lock()
        self.received: list[dict] = []
        self.failures: dict[str, int] = {}
        sink = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length))
                event_id = payload.get("event_id", "?")
                with sink.lock:
                    fails = sink.failures.get(event_id, 0)
                    if fails < sink.fail_first:
                        sink.failures[event_id] = fails + 1
                        status = 500
                    else:
                        sink.received.append(payload)
                        status = 200
                body = b"{}"
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self._httpd.server_address[1]}/hook"

    def count_for(self, event_id: str) -> int:
        with self.lock:
            return sum(1 for p in self.received if p["event_id"] == event_id)

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


@pytest.fixture
def webhook():
    sink = RecordingWebhook()
    yield sink
    sink.close()


def measured_peak_dbm(scene: EmitterScene, center_hz: float, config: FrontEndConfig,
                      n_fft: int = 8192, dwell_s: float = 0.010):
    """Tune, acquire once and return (peak_freq, peak_power)."""
    from pdwatch.dsp import peak_search, spectrum_from_frame

    device = SimulatedFrontEnd(scene, config)
    device.tune(center_hz)
    frame = device.acquire(dwell_s, t0_unix_ms=0)
    return peak_search(spectrum_from_frame(frame, n_fft))


def assert_close_db(actual: float, expected: float, tol_db: float) -> None:
    assert abs(actual - expected) <= tol_db, f"{actual} dBm vs {expected} dBm (tol {tol_db})"


# quick sanity that the conftest oracle itself is right: 1 Vpp -> 3.9794 dBm
assert abs(tone_source_dbm(0.5) - power_dbm(0.5, 0.0, 0.01)) < 1e-12
