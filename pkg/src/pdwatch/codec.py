"""IQ recording container (.iqf) plus CSV exports.

The .iqf layout (version 1, little-endian throughout)::

    offset  size  field
    0       4     magic "PDIQ"
    4       2     version (u16) = 1
    6       2     header_len (u16) = 72
    8       8     center_freq_hz (u64)
    16      8     span_hz (u64)
    24      8     iq_rate_hz (u64)
    32      8     t0_unix_ms (i64)
    40      8     n_samples (u64)
    48      1     adc_bits (u8)
    49      8     full_scale_microvolts (u64)
    57      8     cal_constant_micro (u64, C * 1e6)
    65      7     reserved (zero)
    72      4*n   payload: n_samples x (I i16, Q i16)
    end     4     CRC32 (u32, poly 0xEDB88320) over header + payload

Frequencies are stored at 1 Hz resolution and full scale / calibration at
1e-6 resolution, keeping the header integer-only and bit-exact across
platforms.  The frame's window_index is sweep context and is not persisted;
read_iqf returns it as 0.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import IqFrame
from .errors import CorruptError, FormatError

MAGIC = b"PDIQ"
VERSION = 1
HEADER_LEN = 72
_FIXED_FMT = "<4sHHQQQqQBQQ"
_FIXED_LEN = struct.calcsize(_FIXED_FMT)  # 65
_CRC_LEN = 4

CSV_FRAME_HEADER = ["sample_index", "time_s", "i_adc", "q_adc", "i_volts", "q_volts"]
CSV_SPECTRUM_HEADER = ["freq_hz", "power_dbm"]


def _encode_header(frame: IqFrame, n_samples: int) -> bytes:
    fixed = struct.pack(
        _FIXED_FMT,
        MAGIC,
        VERSION,
        HEADER_LEN,
        int(round(frame.center_freq_hz)),
        int(round(frame.span_hz)),
        int(round(frame.iq_rate_hz)),
        int(frame.t0_unix_ms),
        n_samples,
        frame.adc_bits,
        int(round(frame.full_scale_v * 1e6)),
        int(round(frame.cal_constant * 1e6)),
    )
    return fixed + b"\x00" * (HEADER_LEN - _FIXED_LEN)


def frame_to_bytes(frame: IqFrame) -> bytes:
    """Serialize a frame to the full .iqf byte image."""
    n = frame.n_samples
    if n == 0:
        raise FormatError("refusing to encode a zero-sample frame")
    header = _encode_header(frame, n)
    payload = np.ascontiguousarray(frame.samples, dtype="<i2").tobytes()
    crc = zlib.crc32(header + payload) & 0xFFFFFFFF
    return header + payload + struct.pack("<I", crc)


def write_iqf(frame: IqFrame, path: str | Path) -> int:
    """Write one frame; returns the byte count on disk."""
    blob = frame_to_bytes(frame)
    Path(path).write_bytes(blob)
    return len(blob)


def frame_from_bytes(blob: bytes) -> IqFrame:
    if len(blob) < 8:
        raise CorruptError(f"file too short for a header ({len(blob)} bytes)")
    magic, version, header_len = struct.unpack_from("<4sHH", blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if header_len < _FIXED_LEN:
        raise CorruptError(f"header_len {header_len} below fixed fields ({_FIXED_LEN})")
    if len(blob) < header_len + _CRC_LEN:
        raise CorruptError("truncated file: header incomplete")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - _CRC_LEN)
    actual_crc = zlib.crc32(blob[: len(blob) - _CRC_LEN]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CorruptError(f"CRC mismatch: stored {stored_crc:#010x}, actual {actual_crc:#010x}")
    (
        _magic,
        _version,
        _header_len,
        center_freq,
        span,
        iq_rate,
        t0_ms,
        n_samples,
        adc_bits,
        full_scale_uv,
        cal_micro,
    ) = struct.unpack_from(_FIXED_FMT, blob, 0)
    payload = blob[header_len : len(blob) - _CRC_LEN]
    if len(payload) != n_samples * 4:
        raise CorruptError(
            f"payload length {len(payload)} != 4 * n_samples ({n_samples})"
        )
    samples = np.frombuffer(payload, dtype="<i2").reshape(n_samples, 2).copy()
    return IqFrame(
        center_freq_hz=float(center_freq),
        span_hz=float(span),
        iq_rate_hz=float(iq_rate),
        t0_unix_ms=t0_ms,
        samples=samples,
        adc_bits=adc_bits,
        full_scale_v=full_scale_uv / 1e6,
        cal_constant=cal_micro / 1e6,
        window_index=0,
    )


def read_iqf(path: str | Path) -> IqFrame:
    """Read and CRC-verify one .iqf file."""
    return frame_from_bytes(Path(path).read_bytes())


def export_csv(frame: IqFrame, path: str | Path) -> int:
    """Decode a frame to CSV (one sample per row); returns the row count."""
    scale = frame.full_scale_v / float(1 << (frame.adc_bits - 1))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FRAME_HEADER)
        for idx in range(frame.n_samples):
            i_adc = int(frame.samples[idx, 0])
            q_adc = int(frame.samples[idx, 1])
            writer.writerow(
                [
                    idx,
                    repr(idx / frame.iq_rate_hz),
                    i_adc,
                    q_adc,
                    repr(i_adc * scale),
                    repr(q_adc * scale),
                ]
            )
    return frame.n_samples


def _format_dbm(value: float) -> str:
    if value == float("-inf"):
        return "-inf"
    return repr(float(value))


def write_spectrum_csv(spectrum, path: str | Path) -> int:
    """Write freq_hz,power_dbm rows (sorted by frequency); returns row count.

    Accepts anything exposing bin_freqs/power_dbm (per-window spectra) or
    freqs/power_dbm (stitched spectra).
    """
    freqs = getattr(spectrum, "bin_freqs", None)
    if freqs is None:
        freqs = spectrum.freqs
    power = spectrum.power_dbm
    freqs = np.asarray(freqs, dtype=np.float64)
    power = np.asarray(power, dtype=np.float64)
    if freqs.size == 0:
        raise FormatError("refusing to write an empty spectrum")
    order = np.argsort(freqs, kind="stable")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_SPECTRUM_HEADER)
        for idx in order:
            writer.writerow([repr(float(freqs[idx])), _format_dbm(power[idx])])
    return int(freqs.size)


def read_spectrum_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Re-parse a spectrum CSV; '-inf' strings come back as -inf floats."""
    freqs: list[float] = []
    power: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_SPECTRUM_HEADER:
            raise FormatError(f"unexpected spectrum CSV header {header}")
        for row in reader:
            freqs.append(float(row[0]))
            power.append(float(row[1]))
    return np.asarray(freqs), np.asarray(power)


@dataclass(frozen=True)
class DecodeResult:
    input: Path
    output: Path | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def batch_decode(dir_in: str | Path, dir_out: str | Path) -> list[DecodeResult]:
    """Decode every .iqf under dir_in to CSV; per-file failures are collected.

    Returns the manifest in input order.  Re-running with the same inputs
    produces identical outputs.
    """
    dir_in = Path(dir_in)
    dir_out = Path(dir_out)
    if not dir_in.is_dir():
        raise FileNotFoundError(f"input directory {dir_in} does not exist")
    dir_out.mkdir(parents=True, exist_ok=True)
    manifest: list[DecodeResult] = []
    for src in sorted(dir_in.glob("*.iqf")):
        dst = dir_out / (src.stem + ".csv")
        try:
            frame = read_iqf(src)
            export_csv(frame, dst)
        except (FormatError, CorruptError, OSError) as exc:
            manifest.append(DecodeResult(input=src, output=None, error=str(exc)))
        else:
            manifest.append(DecodeResult(input=src, output=dst))
    return manifest
