"""Declarative RF scenes for the simulated front end.

A scene is a list of emitters plus a white-noise density and a PRNG seed.
Scene files are plain JSON with the documented key set::

    {
      "noise_density_dbm_hz": -174.0,     # number, null or "-inf" for noiseless
      "seed": 12345,
      "emitters": [
        {"kind": "cw_tone", "freq_hz": 315e6, "amplitude_v": 0.5,
         "phase_rad": 0.0, "attenuation_db": 39.98},
        {"kind": "pd_pulse_train", "center_freq_hz": 800e6, "bandwidth_hz": 2e6,
         "repetition_hz": 100, "pulse_peak_v": 0.1, "poisson": true,
         "attenuation_db": 0.0},
        {"kind": "burst", "center_freq_hz": 2402e6, "duty_cycle": 1.0,
         "burst_len_s": 1.0, "power_dbm": -60.0, "attenuation_db": 0.0}
      ]
    }

Unknown keys are rejected so that typos fail loudly instead of silently
changing the simulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union

from .dsp import R_LOAD_OHMS, dbm_to_watts, watts_to_dbm
from .errors import ConfigError

MAX_FREQ_HZ = 3e9


def amplitude_from_dbm(level_dbm: float) -> float:
    """Envelope volts of a tone dissipating level_dbm in the 50 ohm load."""
    return math.sqrt(2.0 * R_LOAD_OHMS * dbm_to_watts(level_dbm))


def _check_freq(freq_hz: float, name: str) -> None:
    if not (0.0 < freq_hz <= MAX_FREQ_HZ):
        raise ValueError(f"{name} must be in (0, {MAX_FREQ_HZ:.0f}] Hz, got {freq_hz}")


@dataclass(frozen=True)
class CwTone:
    """Continuous sine wave of amplitude_v volts peak across the 50 ohm load."""

    freq_hz: float
    amplitude_v: float
    phase_rad: float = 0.0
    attenuation_db: float = 0.0

    def __post_init__(self) -> None:
        _check_freq(self.freq_hz, "freq_hz")
        if self.amplitude_v <= 0:
            raise ValueError("amplitude_v must be > 0")
        if self.attenuation_db < 0:
            raise ValueError("attenuation_db must be >= 0")

    @property
    def carrier_hz(self) -> float:
        return self.freq_hz

    def received_amplitude_v(self) -> float:
        return self.amplitude_v * 10.0 ** (-self.attenuation_db / 20.0)

    def received_power_dbm(self) -> float:
        a = self.received_amplitude_v()
        return watts_to_dbm(a * a / (2.0 * R_LOAD_OHMS))


@dataclass(frozen=True)
class PdPulseTrain:
    """Train of damped-sinusoid pulses V*exp(-t/tau)*sin(2*pi*fc*t).

    The decay constant tau is set so the pulse's Lorentzian spectrum has the
    configured -3 dB bandwidth: tau = 1/(pi*bandwidth).  Repetition is either
    a Poisson arrival rate or a fixed period of 1/repetition_hz, selected by
    the ``poisson`` flag.
    """

    center_freq_hz: float
    bandwidth_hz: float
    repetition_hz: float
    pulse_peak_v: float
    poisson: bool = True
    attenuation_db: float = 0.0

    def __post_init__(self) -> None:
        _check_freq(self.center_freq_hz, "center_freq_hz")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be > 0")
        if self.repetition_hz <= 0:
            raise ValueError("repetition_hz must be > 0")
        if self.pulse_peak_v <= 0:
            raise ValueError("pulse_peak_v must be > 0")
        if self.attenuation_db < 0:
            raise ValueError("attenuation_db must be >= 0")

    @property
    def carrier_hz(self) -> float:
        return self.center_freq_hz

    @property
    def tau_s(self) -> float:
        return 1.0 / (math.pi * self.bandwidth_hz)

    def received_peak_v(self) -> float:
        return self.pulse_peak_v * 10.0 ** (-self.attenuation_db / 20.0)


@dataclass(frozen=True)
class Burst:
    """On/off keyed carrier: on for burst_len_s out of every burst_len_s/duty."""

    center_freq_hz: float
    duty_cycle: float
    burst_len_s: float
    power_dbm: float
    attenuation_db: float = 0.0

    def __post_init__(self) -> None:
        _check_freq(self.center_freq_hz, "center_freq_hz")
        if not (0.0 < self.duty_cycle <= 1.0):
            raise ValueError("duty_cycle must be in (0, 1]")
        if self.burst_len_s <= 0:
            raise ValueError("burst_len_s must be > 0")
        if self.attenuation_db < 0:
            raise ValueError("attenuation_db must be >= 0")

    @property
    def carrier_hz(self) -> float:
        return self.center_freq_hz

    @property
    def period_s(self) -> float:
        return self.burst_len_s / self.duty_cycle

    def received_power_dbm(self) -> float:
        return self.power_dbm - self.attenuation_db

    def received_amplitude_v(self) -> float:
        return amplitude_from_dbm(self.received_power_dbm())


Emitter = Union[CwTone, PdPulseTrain, Burst]

_EMITTER_KINDS = {
    "cw_tone": CwTone,
    "pd_pulse_train": PdPulseTrain,
    "burst": Burst,
}


@dataclass(frozen=True)
class EmitterScene:
    """Emitters plus noise density (dBm/Hz) and the seed that fixes all draws.

    noise_density_dbm_hz may be -inf ("noiseless" test mode); NaN and +inf are
    rejected.  The seed fully determines simulator output for a given
    acquisition call sequence.
    """

    emitters: tuple[Emitter, ...] = ()
    noise_density_dbm_hz: float = -174.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "emitters", tuple(self.emitters))
        nd = self.noise_density_dbm_hz
        if math.isnan(nd) or nd == float("inf"):
            raise ValueError("noise_density_dbm_hz must be finite or -inf")
        if not (0 <= int(self.seed) < (1 << 64)):
            raise ValueError("seed must fit in 64 bits")


def scene_power_at(scene: EmitterScene, freq_hz: float, tol_hz: float = 1.0) -> float:
    """Analytic received power (dBm) of the dominant steady emitter at freq_hz.

    Test oracle: covers CW tones (A^2/(2*50) minus attenuation) and bursts
    (declared power minus attenuation).  Pulse trains have no single steady
    power level and are ignored.  Returns -inf when nothing emits there.
    """
    if freq_hz <= 0:
        raise ValueError("freq_hz must be > 0")
    best = float("-inf")
    for em in scene.emitters:
        if isinstance(em, PdPulseTrain):
            continue
        if abs(em.carrier_hz - freq_hz) <= tol_hz:
            best = max(best, em.received_power_dbm())
    return best


def _from_dict(kind_map: dict, entry: dict) -> Emitter:
    if not isinstance(entry, dict):
        raise ConfigError(f"emitter entry must be an object, got {type(entry).__name__}")
    kind = entry.get("kind")
    if kind not in kind_map:
        raise ConfigError(f"unknown emitter kind {kind!r}; expected one of {sorted(kind_map)}")
    cls = kind_map[kind]
    allowed = {f.name for f in fields(cls)}
    given = {k: v for k, v in entry.items() if k != "kind"}
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} for emitter kind {kind!r}")
    try:
        return cls(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} emitter: {exc}") from exc


def scene_from_dict(data: dict) -> EmitterScene:
    if not isinstance(data, dict):
        raise ConfigError("scene must be a JSON object")
    unknown = set(data) - {"emitters", "noise_density_dbm_hz", "seed"}
    if unknown:
        raise ConfigError(f"unknown scene keys {sorted(unknown)}")
    nd = data.get("noise_density_dbm_hz", -174.0)
    if nd is None or nd == "-inf":
        nd = float("-inf")
    if not isinstance(nd, (int, float)):
        raise ConfigError("noise_density_dbm_hz must be a number, null or \"-inf\"")
    emitters = [_from_dict(_EMITTER_KINDS, e) for e in data.get("emitters", [])]
    try:
        return EmitterScene(
            emitters=tuple(emitters),
            noise_density_dbm_hz=float(nd),
            seed=int(data.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def scene_to_dict(scene: EmitterScene) -> dict:
    emitters = []
    kind_by_cls = {cls: kind for kind, cls in _EMITTER_KINDS.items()}
    for em in scene.emitters:
        entry = {"kind": kind_by_cls[type(em)]}
        for f in fields(em):
            entry[f.name] = getattr(em, f.name)
        emitters.append(entry)
    nd = scene.noise_density_dbm_hz
    return {
        "noise_density_dbm_hz": "-inf" if nd == float("-inf") else nd,
        "seed": scene.seed,
        "emitters": emitters,
    }


def load_scene(path: str | Path) -> EmitterScene:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scene file {path}: invalid JSON ({exc})") from exc
    return scene_from_dict(data)


def save_scene(scene: EmitterScene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")
