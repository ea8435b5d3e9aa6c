"""Simulated front-end behavior: tuning, calibration, determinism, noise."""

import math

import numpy as np
import pytest

from pdwatch.device import (
    AntennaModel,
    FrontEndConfig,
    SimulatedFrontEnd,
    draw_pulse_times,
)
from pdwatch.dsp import peak_search, power_dbm, spectrum_from_frame, watts_to_dbm
from pdwatch.errors import StateError, TuneError
from pdwatch.scene import Burst, CwTone, EmitterScene, PdPulseTrain, scene_power_at

from conftest import tone_scene


NOISELESS = float("-inf")


def make_device(scene, **cfg_kwargs):
    defaults = dict(iq_rate_hz=4e6, span_hz=4e6, full_scale_v=1.0)
    defaults.update(cfg_kwargs)
    return SimulatedFrontEnd(scene, FrontEndConfig(**defaults))


class TestTune:
    def test_out_of_range(self):
        dev = make_device(EmitterScene())
        with pytest.raises(TuneError):
            dev.tune(0.0)
        with pytest.raises(TuneError):
            dev.tune(3.2e9)

    def test_upper_bound_inclusive(self):
        make_device(EmitterScene()).tune(3e9)

    def test_acquire_before_tune(self):
        dev = make_device(EmitterScene())
        with pytest.raises(StateError):
            dev.acquire(0.001, t0_unix_ms=0)

    def test_retune_idempotent(self):
        scene = tone_scene(760e6, -30.0, seed=5)
        a = make_device(scene)
        b = make_device(scene)
        a.tune(758e6)
        b.tune(758e6)
        b.tune(758e6)  # double tune draws nothing and changes nothing
        fa = a.acquire(0.002, t0_unix_ms=0)
        fb = b.acquire(0.002, t0_unix_ms=0)
        assert np.array_equal(fa.samples, fb.samples)

    def test_offset_tone_lands_at_baseband_offset(self):
        # 768 MHz tone seen from a 760 MHz window peaks +8 MHz from center
        scene = tone_scene(768e6, -35.7, seed=3, noise_density_dbm_hz=NOISELESS)
        dev = make_device(scene, iq_rate_hz=32e6, span_hz=20e6, full_scale_v=0.02)
        dev.tune(760e6)
        frame = dev.acquire(0.005, t0_unix_ms=0)
        freq, _ = peak_search(spectrum_from_frame(frame, 8192))
        assert abs(freq - 768e6) <= 32e6 / 8192


class TestAcquire:
    def test_sample_count_floor(self):
        dev = make_device(EmitterScene())
        dev.tune(1e9)
        frame = dev.acquire(0.0017, t0_unix_ms=0)
        assert frame.n_samples == math.floor(0.0017 * 4e6)

    def test_bad_dwell(self):
        dev = make_device(EmitterScene())
        dev.tune(1e9)
        with pytest.raises(ValueError):
            dev.acquire(0.0, t0_unix_ms=0)

    def test_empty_noiseless_scene_all_zero(self):
        dev = make_device(EmitterScene(noise_density_dbm_hz=NOISELESS))
        dev.tune(1e9)
        frame = dev.acquire(0.005, t0_unix_ms=0)
        assert not frame.samples.any()

    def test_frame_carries_config(self):
        dev = make_device(EmitterScene(), full_scale_v=0.25, adc_bits=12)
        dev.tune(1.5e9)
        frame = dev.acquire(0.001, t0_unix_ms=777, window_index=4)
        assert frame.center_freq_hz == 1.5e9
        assert frame.adc_bits == 12
        assert frame.full_scale_v == 0.25
        assert frame.t0_unix_ms == 777
        assert frame.window_index == 4


class TestCalibration:
    def test_tone_at_center_constant_magnitude(self):
        # closed-form oracle: |z| = A * 10^(-att/20), power = A^2/(2*50) - att
        amplitude, att = 0.5, 6.0
        scene = EmitterScene(
            emitters=(CwTone(freq_hz=1e9, amplitude_v=amplitude, attenuation_db=att),),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = make_device(scene)
        dev.tune(1e9)
        frame = dev.acquire(0.002, t0_unix_ms=0)
        z = frame.volts()
        expected_mag = amplitude * 10 ** (-att / 20)
        assert np.max(np.abs(np.abs(z) - expected_mag)) < expected_mag * 1e-3
        measured = power_dbm(float(np.sqrt(np.mean(np.abs(z) ** 2))), 0.0)
        assert abs(measured - scene_power_at(scene, 1e9)) < 0.01

    def test_spectrum_peak_matches_scene_power(self):
        scene = tone_scene(315e6, -36.0, seed=2, noise_density_dbm_hz=NOISELESS)
        dev = make_device(scene, full_scale_v=0.02)
        dev.tune(315e6)
        frame = dev.acquire(0.010, t0_unix_ms=0)
        _, peak = peak_search(spectrum_from_frame(frame, 8192))
        assert abs(peak - (-36.0)) < 0.05

    def test_quantization_floor(self):
        # 16 bits with full_scale >= 2x peak moves tone power < 0.1 dB
        amplitude = 0.4
        scene = EmitterScene(
            emitters=(CwTone(freq_hz=1e9, amplitude_v=amplitude),),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = make_device(scene, full_scale_v=2 * amplitude)
        dev.tune(1e9)
        frame = dev.acquire(0.004, t0_unix_ms=0)
        _, peak = peak_search(spectrum_from_frame(frame, 4096))
        assert abs(peak - watts_to_dbm(amplitude ** 2 * 0.01)) < 0.1

    def test_burst_power_level(self):
        scene = EmitterScene(
            emitters=(
                Burst(center_freq_hz=2402e6, duty_cycle=1.0, burst_len_s=1.0, power_dbm=-60),
            ),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = make_device(scene, iq_rate_hz=32e6, span_hz=32e6, full_scale_v=0.005)
        dev.tune(2400e6)
        frame = dev.acquire(0.005, t0_unix_ms=0)
        freq, peak = peak_search(spectrum_from_frame(frame, 8192))
        assert abs(freq - 2402e6) <= 32e6 / 8192
        assert abs(peak - (-60.0)) < 0.1

    def test_burst_gating_fraction(self):
        burst = Burst(center_freq_hz=1e9, duty_cycle=0.25, burst_len_s=0.001, power_dbm=-30)
        scene = EmitterScene(emitters=(burst,), noise_density_dbm_hz=NOISELESS)
        dev = make_device(scene, full_scale_v=0.05)
        dev.tune(1e9)
        frame = dev.acquire(0.008, t0_unix_ms=0)  # exactly 2 burst periods
        on_fraction = np.mean(np.abs(frame.volts()) > 1e-6)
        assert on_fraction == pytest.approx(0.25, abs=0.01)


class TestDeterminism:
    def test_bit_identical_frames(self):
        scene = EmitterScene(
            emitters=(
                CwTone(freq_hz=1.0003e9, amplitude_v=0.1),
                PdPulseTrain(
                    center_freq_hz=1.001e9,
                    bandwidth_hz=1e5,
                    repetition_hz=500,
                    pulse_peak_v=0.2,
                ),
            ),
            noise_density_dbm_hz=-160.0,
            seed=1234,
        )
        frames = []
        for _ in range(2):
            dev = make_device(scene)
            dev.tune(1e9)
            first = dev.acquire(0.003, t0_unix_ms=0)
            dev.tune(1.002e9)
            second = dev.acquire(0.003, t0_unix_ms=1)
            frames.append((first, second))
        assert np.array_equal(frames[0][0].samples, frames[1][0].samples)
        assert np.array_equal(frames[0][1].samples, frames[1][1].samples)

    def test_different_seeds_differ(self):
        base = EmitterScene(noise_density_dbm_hz=-150.0, seed=1)
        other = EmitterScene(noise_density_dbm_hz=-150.0, seed=2)
        frames = []
        for scene in (base, other):
            dev = make_device(scene, full_scale_v=1e-4)
            dev.tune(1e9)
            frames.append(dev.acquire(0.002, t0_unix_ms=0))
        assert not np.array_equal(frames[0].samples, frames[1].samples)


class TestBandLimiting:
    def test_tone_outside_span_contributes_nothing(self):
        scene = EmitterScene(
            emitters=(CwTone(freq_hz=900e6, amplitude_v=0.5),),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = make_device(scene)
        dev.tune(300e6)  # 900 MHz is far outside the 4 MHz span
        frame = dev.acquire(0.002, t0_unix_ms=0)
        assert not frame.samples.any()

    def test_tone_just_outside_edge_excluded(self):
        scene = EmitterScene(
            emitters=(CwTone(freq_hz=302.001e6, amplitude_v=0.5),),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = make_device(scene)  # span 4 MHz: edge at 302.0 MHz
        dev.tune(300e6)
        assert not dev.acquire(0.002, t0_unix_ms=0).samples.any()

    def test_pulse_train_far_outside_excluded(self):
        scene = EmitterScene(
            emitters=(
                PdPulseTrain(
                    center_freq_hz=500e6,
                    bandwidth_hz=1e5,
                    repetition_hz=1000,
                    pulse_peak_v=0.5,
                ),
            ),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = make_device(scene)
        dev.tune(300e6)
        assert not dev.acquire(0.002, t0_unix_ms=0).samples.any()

    def test_noise_power_limited_to_span(self):
        # in-band noise power should be N0 * span regardless of iq_rate
        scene = EmitterScene(noise_density_dbm_hz=-150.0, seed=3)
        dev = make_device(scene, iq_rate_hz=8e6, span_hz=2e6, full_scale_v=1e-3)
        dev.tune(1e9)
        frame = dev.acquire(0.01, t0_unix_ms=0)
        z = frame.volts()
        measured_w = np.mean(np.abs(z) ** 2) * 0.01
        expected_w = 10 ** (-150.0 / 10) * 1e-3 * 2e6
        assert measured_w == pytest.approx(expected_w, rel=0.05)


class TestPulseTrains:
    def test_poisson_pulse_count_statistics(self):
        # mean count over 1000 dwells within 3 sigma of rate * dwell
        train = PdPulseTrain(
            center_freq_hz=1e9, bandwidth_hz=1e6, repetition_hz=2000, pulse_peak_v=0.1
        )
        rng = np.random.default_rng(99)
        dwell = 0.010
        counts = [len(draw_pulse_times(rng, train, i * dwell, dwell)) for i in range(1000)]
        lam = train.repetition_hz * dwell
        sigma_mean = math.sqrt(lam / 1000)
        assert abs(np.mean(counts) - lam) < 3 * sigma_mean

    def test_fixed_period_pulse_grid(self):
        train = PdPulseTrain(
            center_freq_hz=1e9,
            bandwidth_hz=1e6,
            repetition_hz=1000,
            pulse_peak_v=0.1,
            poisson=False,
        )
        rng = np.random.default_rng(0)
        times = draw_pulse_times(rng, train, 0.0, 0.010)
        assert len(times) == 10
        assert np.allclose(times, np.arange(10) / 1000)
        # second dwell continues the global grid without duplication
        times2 = draw_pulse_times(rng, train, 0.010, 0.010)
        assert times2[0] == pytest.approx(0.010)
        assert len(times2) == 10

    def test_pulse_train_energy_near_carrier(self):
        scene = EmitterScene(
            emitters=(
                PdPulseTrain(
                    center_freq_hz=1.0005e9,
                    bandwidth_hz=2e5,
                    repetition_hz=5000,
                    pulse_peak_v=0.3,
                ),
            ),
            noise_density_dbm_hz=NOISELESS,
            seed=8,
        )
        dev = make_device(scene, full_scale_v=0.5)
        dev.tune(1e9)
        frame = dev.acquire(0.01, t0_unix_ms=0)
        assert frame.samples.any()
        freq, _ = peak_search(spectrum_from_frame(frame, 4096))
        assert abs(freq - 1.0005e9) < 3 * 2e5


class TestAntenna:
    def test_flat_is_unity(self):
        assert AntennaModel().gain(1e9) == 1.0

    def test_bandpass_shapes_tone(self):
        antenna = AntennaModel(kind="bandpass", center_hz=136e6, bandwidth_hz=800e6)
        # at the band edge the response is -3 dB
        edge_gain = antenna.gain(136e6 + 400e6)
        assert 10 * math.log10(edge_gain ** 2) == pytest.approx(-3.01, abs=0.02)
        scene = EmitterScene(
            emitters=(CwTone(freq_hz=536e6, amplitude_v=0.5),),
            noise_density_dbm_hz=NOISELESS,
        )
        dev = SimulatedFrontEnd(
            scene,
            FrontEndConfig(iq_rate_hz=4e6, span_hz=4e6, full_scale_v=1.0, antenna=antenna),
        )
        dev.tune(536e6)
        frame = dev.acquire(0.004, t0_unix_ms=0)
        _, peak = peak_search(spectrum_from_frame(frame, 4096))
        expected = scene_power_at(scene, 536e6) - 3.01
        assert abs(peak - expected) < 0.1

    def test_set_span_reconfigures(self):
        dev = make_device(EmitterScene(), iq_rate_hz=8e6, span_hz=8e6)
        dev.set_span(2e6)
        assert dev.config.span_hz == 2e6
