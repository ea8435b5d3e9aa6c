"""Simulated RF front end: tune a window, acquire quantized IQ frames.

Stands in for an antenna + swept analyzer behind a two-call device surface
(tune, acquire).  Synthesis is ideal: emitters are band-limited with a
brick-wall response at the tuned span edges, so the analytic scene power is
reproduced exactly (up to quantization) and tests can use closed-form
oracles.

Determinism contract: one PRNG stream per device instance, seeded from the
scene.  Per acquire the draw order is fixed (pulse-train arrivals/phases in
scene order first, then noise) so identical (scene, config, call sequence)
produce bit-identical frames.  A device instance must be driven by one
acquisition loop at a time; independent instances are fully isolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dsp import DEFAULT_CAL_CONSTANT, R_LOAD_OHMS, IqFrame, dbm_to_watts
from .errors import StateError, TuneError
from .scene import Burst, CwTone, EmitterScene, MAX_FREQ_HZ, PdPulseTrain

# pulse tails below exp(-14) ~ 8e-7 of peak are dropped
_PULSE_TAIL_DECADES = 14.0
# pulse trains centered further than span/2 + this many bandwidths are skipped
_PULSE_SUPPORT_BW = 20.0


@dataclass(frozen=True)
class AntennaModel:
    """Receive response: flat, or a 2nd-order band-pass magnitude."""

    kind: str = "flat"
    center_hz: float = 136e6
    bandwidth_hz: float = 800e6

    def __post_init__(self) -> None:
        if self.kind not in ("flat", "bandpass"):
            raise ValueError(f"antenna kind must be 'flat' or 'bandpass', got {self.kind!r}")
        if self.kind == "bandpass" and (self.center_hz <= 0 or self.bandwidth_hz <= 0):
            raise ValueError("bandpass antenna needs positive center and bandwidth")

    def gain(self, freq_hz: np.ndarray | float):
        if self.kind == "flat":
            return np.ones_like(np.asarray(freq_hz, dtype=np.float64)) if np.ndim(freq_hz) else 1.0
        x = (np.asarray(freq_hz, dtype=np.float64) - self.center_hz) / (self.bandwidth_hz / 2.0)
        g = 1.0 / np.sqrt(1.0 + x ** 4)
        return g if np.ndim(freq_hz) else float(g)


@dataclass(frozen=True)
class FrontEndConfig:
    """Digitizer settings: complex sample rate, usable span, ADC mapping."""

    iq_rate_hz: float = 56e6
    span_hz: float = 40e6
    adc_bits: int = 16
    full_scale_v: float = 1.0
    cal_constant: float = DEFAULT_CAL_CONSTANT
    antenna: AntennaModel = AntennaModel()

    def __post_init__(self) -> None:
        if self.iq_rate_hz <= 0:
            raise ValueError("iq_rate_hz must be > 0")
        if not (0 < self.span_hz <= self.iq_rate_hz):
            raise ValueError("span_hz must be in (0, iq_rate_hz] (complex baseband)")
        if not (8 <= self.adc_bits <= 16):
            raise ValueError("adc_bits must be in [8, 16]")
        if self.full_scale_v <= 0:
            raise ValueError("full_scale_v must be > 0")
        if self.cal_constant <= 0:
            raise ValueError("cal_constant must be > 0")


def draw_pulse_times(
    rng: np.random.Generator, train: PdPulseTrain, t_start_s: float, dwell_s: float
) -> np.ndarray:
    """Pulse arrival times in [t_start, t_start + dwell), device-clock seconds.

    Poisson mode draws a count then uniform positions (memoryless, so frames
    chain correctly); fixed mode places pulses on the global k/rate grid and
    draws nothing.
    """
    if train.poisson:
        count = int(rng.poisson(train.repetition_hz * dwell_s))
        times = t_start_s + rng.random(count) * dwell_s
        times.sort()
        return times
    period = 1.0 / train.repetition_hz
    k0 = math.ceil(t_start_s / period - 1e-12)
    k1 = math.ceil((t_start_s + dwell_s) / period - 1e-12)
    return np.arange(k0, k1) * period


class SimulatedFrontEnd:
    """Tunable band-limited receiver over an emitter scene."""

    def __init__(self, scene: EmitterScene, config: FrontEndConfig | None = None):
        self.scene = scene
        self.config = config or FrontEndConfig()
        self._rng = np.random.default_rng(scene.seed)
        self._center_hz: float | None = None
        self._sample_clock = 0  # samples acquired since construction

    @property
    def center_freq_hz(self) -> float | None:
        return self._center_hz

    def tune(self, center_freq_hz: float) -> None:
        """Retune the window; idempotent, does not disturb the sample clock."""
        if not (0.0 < center_freq_hz <= MAX_FREQ_HZ):
            raise TuneError(
                f"center frequency {center_freq_hz} Hz outside (0, {MAX_FREQ_HZ:.0f}]"
            )
        self._center_hz = float(center_freq_hz)

    def set_span(self, span_hz: float) -> None:
        """Adjust the usable span (sweep-boundary reconfiguration)."""
        self.config = replace(self.config, span_hz=span_hz)

    def acquire(self, dwell_s: float, t0_unix_ms: int, window_index: int = 0) -> IqFrame:
        """Capture floor(dwell * iq_rate) complex samples at the tuned center."""
        if self._center_hz is None:
            raise StateError("acquire before tune")
        if dwell_s <= 0:
            raise ValueError("dwell_s must be > 0")
        cfg = self.config
        n = int(math.floor(dwell_s * cfg.iq_rate_hz))
        if n < 1:
            raise ValueError("dwell too short for one sample at this iq_rate")
        t_start = self._sample_clock / cfg.iq_rate_hz
        t = t_start + np.arange(n) / cfg.iq_rate_hz

        z = np.zeros(n, dtype=np.complex128)
        for em in self.scene.emitters:
            z += self._emitter_baseband(em, t, n)
        z += self._noise(n)
        self._sample_clock += n

        half = 1 << (cfg.adc_bits - 1)
        scale = half / cfg.full_scale_v
        codes = np.empty((n, 2), dtype=np.int16)
        codes[:, 0] = np.clip(np.rint(z.real * scale), -half, half - 1).astype(np.int16)
        codes[:, 1] = np.clip(np.rint(z.imag * scale), -half, half - 1).astype(np.int16)

        return IqFrame(
            center_freq_hz=self._center_hz,
            span_hz=cfg.span_hz,
            iq_rate_hz=cfg.iq_rate_hz,
            t0_unix_ms=int(t0_unix_ms),
            samples=codes,
            adc_bits=cfg.adc_bits,
            full_scale_v=cfg.full_scale_v,
            cal_constant=cfg.cal_constant,
            window_index=window_index,
        )

    # -- synthesis ---------------------------------------------------------

    def _emitter_baseband(self, em, t: np.ndarray, n: int) -> np.ndarray:
        center = self._center_hz
        half_span = self.config.span_hz / 2.0
        if isinstance(em, CwTone):
            offset = em.freq_hz - center
            if abs(offset) > half_span:
                return 0.0
            amp = em.received_amplitude_v() * self.config.antenna.gain(em.freq_hz)
            return amp * np.exp(1j * (2.0 * np.pi * offset * t + em.phase_rad))
        if isinstance(em, Burst):
            offset = em.center_freq_hz - center
            if abs(offset) > half_span:
                return 0.0
            amp = em.received_amplitude_v() * self.config.antenna.gain(em.center_freq_hz)
            on = (t % em.period_s) < em.burst_len_s
            return amp * on * np.exp(2j * np.pi * offset * t)
        if isinstance(em, PdPulseTrain):
            return self._pulse_train_baseband(em, t, n)
        raise TypeError(f"unknown emitter type {type(em).__name__}")

    def _pulse_train_baseband(self, em: PdPulseTrain, t: np.ndarray, n: int) -> np.ndarray:
        center = self._center_hz
        cfg = self.config
        offset = em.center_freq_hz - center
        in_reach = abs(offset) <= cfg.span_hz / 2.0 + _PULSE_SUPPORT_BW * em.bandwidth_hz
        # rng draws must happen even for skipped emitters to keep the
        # stream position independent of the tuned center
        times = draw_pulse_times(self._rng, em, float(t[0]), n / cfg.iq_rate_hz)
        phases = self._rng.random(len(times)) * 2.0 * np.pi
        if not in_reach or len(times) == 0:
            return 0.0
        tau = em.tau_s
        peak = em.received_peak_v()
        fs = cfg.iq_rate_hz
        tail = min(n, int(math.ceil(_PULSE_TAIL_DECADES * tau * fs)) + 1)
        z = np.zeros(n, dtype=np.complex128)
        for t_k, phi in zip(times, phases):
            i0 = int(math.ceil((t_k - t[0]) * fs - 1e-9))
            if i0 >= n:
                continue
            i0 = max(i0, 0)
            i1 = min(n, i0 + tail)
            dt = t[i0:i1] - t_k
            z[i0:i1] += peak * np.exp(-dt / tau) * np.exp(1j * (2.0 * np.pi * offset * dt + phi))
        return self._band_limit(z, apply_antenna=True)

    def _band_limit(self, z: np.ndarray, apply_antenna: bool) -> np.ndarray:
        """Brick-wall the signal to the tuned span (and apply antenna gain)."""
        cfg = self.config
        flat = cfg.antenna.kind == "flat"
        if cfg.span_hz >= cfg.iq_rate_hz and (flat or not apply_antenna):
            return z
        freqs = np.fft.fftfreq(z.size, 1.0 / cfg.iq_rate_hz)
        mask = np.abs(freqs) <= cfg.span_hz / 2.0 + 1e-9
        spectrum = np.fft.fft(z)
        spectrum[~mask] = 0.0
        if apply_antenna and not flat:
            spectrum[mask] *= cfg.antenna.gain(self._center_hz + freqs[mask])
        return np.fft.ifft(spectrum)

    def _noise(self, n: int) -> np.ndarray:
        nd = self.scene.noise_density_dbm_hz
        if nd == float("-inf"):
            return 0.0
        cfg = self.config
        # white at density N0 across the full iq_rate, then band-limited to
        # the span: in-band power lands at N0 * span watts
        n0_w_hz = dbm_to_watts(nd)
        var = 2.0 * R_LOAD_OHMS * n0_w_hz * cfg.iq_rate_hz
        sigma = math.sqrt(var / 2.0)
        z = sigma * (self._rng.standard_normal(n) + 1j * self._rng.standard_normal(n))
        if cfg.span_hz >= cfg.iq_rate_hz:
            return z
        return self._band_limit(z, apply_antenna=False)
