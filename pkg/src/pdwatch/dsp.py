"""Spectral math for the scanning pipeline.

Everything here is a pure function on immutable inputs: frames come in,
power spectra and peak classifications come out.  Power is expressed in dBm
throughout, with ``float('-inf')`` as the explicit "no power" sentinel
(serialized as the string ``-inf`` in CSV exports).

Calibration convention: I/Q samples are envelope volts, and a calibration
constant C converts envelope power to watts.  The default C = 1/(2*50) = 0.01
maps a tone of envelope A volts to A^2/(2*50 ohm) watts, i.e. real power into
a 50 ohm load.  C = 1 reproduces the bare 10*log10((I^2+Q^2)/1mW) reading.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

R_LOAD_OHMS = 50.0
# envelope volts^2 -> watts into the 50 ohm load
DEFAULT_CAL_CONSTANT = 1.0 / (2.0 * R_LOAD_OHMS)
DEFAULT_N_FFT = 8192

_MILLIWATT = 1e-3
_DFT_MAX_N = 1 << 16

WINDOW_FUNCTIONS = ("rect", "hann")


def watts_to_dbm(power_w: float) -> float:
    """Convert watts to dBm; non-positive power maps to -inf."""
    if power_w <= 0.0:
        return float("-inf")
    return 10.0 * math.log10(power_w / _MILLIWATT)


def dbm_to_watts(power_dbm: float) -> float:
    if power_dbm == float("-inf"):
        return 0.0
    return _MILLIWATT * 10.0 ** (power_dbm / 10.0)


def power_dbm(i: float, q: float, cal_constant: float = DEFAULT_CAL_CONSTANT) -> float:
    """Power in dBm of one I/Q pair: 10*log10((I^2 + Q^2) * C / 1 mW).

    (0, 0) maps to -inf rather than raising; -inf is a value here, not an
    error.
    """
    if cal_constant <= 0.0:
        raise ValueError("cal_constant must be > 0")
    return watts_to_dbm((i * i + q * q) * cal_constant)


def dft_naive(x: np.ndarray) -> np.ndarray:
    """Direct-sum DFT: X[k] = sum_n x[n] * exp(-j*2*pi*k*n/N).

    Oracle-grade reference for the fast transform: evaluates the sum
    directly (O(N^2), no butterflies), capped at N = 2^16.  The twiddle
    factor splits as W^(kn) = W^(k0*n) * W^(rn) so output rows are computed
    in blocks of cumulative root-of-unity powers, keeping the quadratic
    work in one matrix product per block.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    if n < 1:
        raise ValueError("dft_naive requires a non-empty input")
    if n > _DFT_MAX_N:
        raise ValueError(f"dft_naive capped at N <= {_DFT_MAX_N}, got {n}")
    row1 = np.exp(-2j * np.pi * np.arange(n) / n)
    block = min(n, 64)
    powers = np.empty((block, n), dtype=np.complex128)
    powers[0] = 1.0
    for r in range(1, block):
        powers[r] = powers[r - 1] * row1
    step = powers[block - 1] * row1  # row1 ** block
    out = np.empty(n, dtype=np.complex128)
    shifted = x.copy()  # x_j * W^(k0*j) for the current block start k0
    for k0 in range(0, n, block):
        b = min(block, n - k0)
        out[k0 : k0 + b] = powers[:b] @ shifted
        if k0 + block < n:
            shifted *= step
    return out


def fft(x: np.ndarray, n_fft: int) -> np.ndarray:
    """FFT of x truncated/zero-padded to n_fft points (power of two)."""
    if n_fft < 1 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    x = np.asarray(x, dtype=np.complex128)
    if x.size >= n_fft:
        padded = x[:n_fft]
    else:
        padded = np.zeros(n_fft, dtype=np.complex128)
        padded[: x.size] = x
    return np.fft.fft(padded)


def _window(name: str, n: int) -> np.ndarray:
    if name == "rect":
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown window {name!r}; expected one of {WINDOW_FUNCTIONS}")


@dataclass
class IqFrame:
    """One dwell's worth of quantized complex baseband samples.

    ``samples`` is an (n, 2) int16 array of (I, Q) ADC codes; ``full_scale_v``
    maps code 2^(adc_bits-1) to volts, so volts = code * full_scale /
    2^(adc_bits-1).  ``window_index`` is sweep context, not part of the
    persisted file format.
    """

    center_freq_hz: float
    span_hz: float
    iq_rate_hz: float
    t0_unix_ms: int
    samples: np.ndarray
    adc_bits: int = 16
    full_scale_v: float = 1.0
    cal_constant: float = DEFAULT_CAL_CONSTANT
    window_index: int = 0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.int16)
        if self.samples.ndim != 2 or self.samples.shape[1] != 2:
            raise ValueError("samples must be an (n, 2) array of (I, Q) pairs")
        if self.iq_rate_hz <= 0:
            raise ValueError("iq_rate_hz must be > 0")
        if self.span_hz > self.iq_rate_hz:
            raise ValueError("span_hz must not exceed iq_rate_hz")

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.iq_rate_hz

    def volts(self) -> np.ndarray:
        """Complex sample values in volts."""
        scale = self.full_scale_v / float(1 << (self.adc_bits - 1))
        s = self.samples.astype(np.float64) * scale
        return s[:, 0] + 1j * s[:, 1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IqFrame):
            return NotImplemented
        return (
            self.center_freq_hz == other.center_freq_hz
            and self.span_hz == other.span_hz
            and self.iq_rate_hz == other.iq_rate_hz
            and self.t0_unix_ms == other.t0_unix_ms
            and self.adc_bits == other.adc_bits
            and self.full_scale_v == other.full_scale_v
            and self.cal_constant == other.cal_constant
            and self.window_index == other.window_index
            and np.array_equal(self.samples, other.samples)
        )


@dataclass
class PowerSpectrum:
    """Per-window power spectrum on an absolute RF bin axis (DC at center)."""

    window_index: int
    center_freq_hz: float
    bin_freqs: np.ndarray
    power_dbm: np.ndarray
    n_fft: int
    n_avg: int

    def __post_init__(self) -> None:
        self.bin_freqs = np.asarray(self.bin_freqs, dtype=np.float64)
        self.power_dbm = np.asarray(self.power_dbm, dtype=np.float64)
        if self.bin_freqs.size != self.power_dbm.size:
            raise ValueError("bin_freqs and power_dbm must have equal length")
        if self.bin_freqs.size == 0:
            raise ValueError("spectrum must be non-empty")

    @property
    def bin_width_hz(self) -> float:
        if self.bin_freqs.size < 2:
            return 0.0
        return float(self.bin_freqs[1] - self.bin_freqs[0])


def welch_power_spectrum(
    z: np.ndarray,
    iq_rate_hz: float,
    n_fft: int = DEFAULT_N_FFT,
    window: str = "rect",
    cal_constant: float = DEFAULT_CAL_CONSTANT,
) -> tuple[np.ndarray, np.ndarray]:
    """Averaged periodogram of complex envelope volts.

    Splits z into K = floor(len/n_fft) non-overlapping segments, averages the
    per-segment envelope power |X[k]|^2/(n_fft*W_coh)^2 and converts to dBm
    with the calibration constant.  Returns (baseband_offsets_hz, power_dbm)
    with DC centered, strictly increasing offsets spaced iq_rate/n_fft.
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.size < n_fft:
        raise ValueError(f"need at least n_fft={n_fft} samples, got {z.size}")
    if n_fft < 1 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    w = _window(window, n_fft)
    coherent_gain = float(np.mean(w))
    k_segments = z.size // n_fft
    segs = z[: k_segments * n_fft].reshape(k_segments, n_fft) * w
    spectra = np.fft.fft(segs, axis=1)
    amp_sq = np.mean(np.abs(spectra) ** 2, axis=0) / (n_fft * coherent_gain) ** 2
    amp_sq = np.fft.fftshift(amp_sq)
    with np.errstate(divide="ignore"):
        p_dbm = 10.0 * np.log10(amp_sq * cal_constant / _MILLIWATT)
    df = iq_rate_hz / n_fft
    offsets = (np.arange(n_fft) - n_fft // 2) * df
    return offsets, p_dbm


def spectrum_from_frame(
    frame: IqFrame, n_fft: int = DEFAULT_N_FFT, window: str = "rect"
) -> PowerSpectrum:
    """Power spectrum of one frame on its absolute RF axis."""
    offsets, p_dbm = welch_power_spectrum(
        frame.volts(), frame.iq_rate_hz, n_fft, window, frame.cal_constant
    )
    return PowerSpectrum(
        window_index=frame.window_index,
        center_freq_hz=frame.center_freq_hz,
        bin_freqs=frame.center_freq_hz + offsets,
        power_dbm=p_dbm,
        n_fft=n_fft,
        n_avg=frame.n_samples // n_fft,
    )


def peak_search(spectrum: PowerSpectrum) -> tuple[float, float]:
    """(frequency, power) of the maximum bin; ties go to the lowest frequency."""
    idx = int(np.argmax(spectrum.power_dbm))
    return float(spectrum.bin_freqs[idx]), float(spectrum.power_dbm[idx])


class Classification(enum.Enum):
    NOISE = "noise"
    THRESHOLD = "THRESHOLD"


def classify(peak_power_dbm: float, threshold_dbm: float) -> Classification:
    """THRESHOLD iff peak strictly exceeds the threshold; NOISE otherwise."""
    if not math.isfinite(threshold_dbm):
        raise ValueError("threshold must be finite")
    if peak_power_dbm > threshold_dbm:
        return Classification.THRESHOLD
    return Classification.NOISE
