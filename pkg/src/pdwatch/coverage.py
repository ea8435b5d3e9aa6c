"""Detection probability for repetitive pulses seen by a sweeping receiver.

A receiver that dwells T_d seconds in each of W windows revisits any one
window every T_r = W * (T_d + overhead) seconds, so an emitter confined to
one window is only observable a fraction of the time.  This module gives
the closed-form catch probability and a Monte Carlo simulation of pulse
arrivals against the sweep schedule to validate it.

Poisson arrivals: per-sweep hit probability p = (1 - exp(-rate*T_d)) *
p_single, compounding to P = 1 - (1-p)^m over m sweeps.  Fixed-period
arrivals with period T_p (phase uniform): p = min(T_d/T_p, 1) * p_single.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnreachableError


@dataclass(frozen=True)
class DetectionModel:
    """Sweep schedule plus emitter repetition statistics.

    pulse_rate_hz is the Poisson arrival rate, or 1/period in fixed mode.
    p_single is the probability that a pulse landing inside the correct
    window's dwell is actually detected (1.0 for comfortably-above-threshold
    pulses; detector sensitivity itself lives in the DSP layer).
    """

    pulse_rate_hz: float
    dwell_s: float = 0.010
    n_windows: int = 61
    n_sweeps: int = 1
    p_single: float = 1.0
    window_overhead_s: float = 0.0
    poisson: bool = True

    def __post_init__(self) -> None:
        if self.pulse_rate_hz <= 0:
            raise ValueError("pulse_rate_hz must be > 0")
        if self.dwell_s <= 0:
            raise ValueError("dwell_s must be > 0")
        if self.n_windows < 1:
            raise ValueError("n_windows must be >= 1")
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")
        if not (0.0 < self.p_single <= 1.0):
            raise ValueError("p_single must be in (0, 1]")
        if self.window_overhead_s < 0:
            raise ValueError("window_overhead_s must be >= 0")

    @property
    def slot_s(self) -> float:
        return self.dwell_s + self.window_overhead_s

    @property
    def revisit_period_s(self) -> float:
        return self.n_windows * self.slot_s

    @property
    def pulse_period_s(self) -> float:
        return 1.0 / self.pulse_rate_hz


def p_detect_per_sweep(model: DetectionModel) -> float:
    if model.poisson:
        return -math.expm1(-model.pulse_rate_hz * model.dwell_s) * model.p_single
    return min(model.dwell_s / model.pulse_period_s, 1.0) * model.p_single


def _compound(p: float, m: int) -> float:
    return 1.0 - (1.0 - p) ** m


def p_detect_analytic(model: DetectionModel) -> float:
    """Probability of >= 1 detection over n_sweeps sweeps."""
    return _compound(p_detect_per_sweep(model), model.n_sweeps)


def required_sweeps(model: DetectionModel, target_p: float) -> int:
    """Smallest m with 1 - (1-p)^m >= target_p."""
    if not (0.0 < target_p < 1.0):
        raise ValueError("target_p must be in (0, 1)")
    p = p_detect_per_sweep(model)
    if p <= 0.0:
        raise UnreachableError("per-sweep detection probability is 0")
    if p >= 1.0:
        return 1
    m = max(1, math.ceil(math.log1p(-target_p) / math.log1p(-p)))
    # pin the ceil against float fuzz so inverse-consistency holds exactly
    while _compound(p, m) < target_p:
        m += 1
    while m > 1 and _compound(p, m - 1) >= target_p:
        m -= 1
    return m


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    stderr: float
    trials: int
    detections: int


def p_detect_monte_carlo(
    model: DetectionModel,
    trials: int = 100_000,
    seed: int = 0,
    home_window: int = 0,
    chunk: int = 20_000,
) -> MonteCarloResult:
    """Simulate pulse arrivals against the sweep schedule.

    Window w is active during [k*T_r + w*slot, k*T_r + w*slot + T_d); a trial
    succeeds when >= 1 pulse lands in the home window's active time and
    survives the per-pulse p_single draw.  Deterministic for a given seed:
    each chunk of trials gets its own generator derived from the master seed,
    so the result is independent of how chunks would be scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0 <= home_window < model.n_windows):
        raise ValueError("home_window out of range")
    t_total = model.n_sweeps * model.revisit_period_s
    lo = home_window * model.slot_s
    hi = lo + model.dwell_s
    t_r = model.revisit_period_s

    n_chunks = (trials + chunk - 1) // chunk
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    detections = 0
    done = 0
    for ci in range(n_chunks):
        rng = np.random.default_rng(seeds[ci])
        size = min(chunk, trials - done)
        if model.poisson:
            counts = rng.poisson(model.pulse_rate_hz * t_total, size)
            total = int(counts.sum())
            times = rng.random(total) * t_total
            trial_ids = np.repeat(np.arange(size), counts)
        else:
            period = model.pulse_period_s
            phases = rng.random(size) * period
            max_pulses = int(math.ceil(t_total / period)) + 1
            times = phases[:, None] + np.arange(max_pulses)[None, :] * period
            valid = times < t_total
            trial_ids = np.repeat(np.arange(size), valid.sum(axis=1))
            times = times[valid]
        in_window = ((times % t_r) >= lo) & ((times % t_r) < hi)
        if model.p_single < 1.0:
            in_window &= rng.random(times.size) < model.p_single
        hits = np.bincount(trial_ids[in_window], minlength=size) > 0
        detections += int(hits.sum())
        done += size

    estimate = detections / trials
    stderr = math.sqrt(max(estimate * (1.0 - estimate), 1e-12) / trials)
    return MonteCarloResult(estimate=estimate, stderr=stderr, trials=trials, detections=detections)


def detection_table(
    model: DetectionModel,
    sweep_counts: list[int],
    trials: int = 0,
    seed: int = 0,
) -> list[dict]:
    """P vs sweep count, analytic plus optional Monte Carlo columns."""
    from dataclasses import replace

    rows = []
    for m in sweep_counts:
        m_model = replace(model, n_sweeps=m)
        row = {
            "sweeps": m,
            "elapsed_s": m * model.revisit_period_s,
            "p_analytic": p_detect_analytic(m_model),
        }
        if trials > 0:
            mc = p_detect_monte_carlo(m_model, trials=trials, seed=seed)
            row["p_monte_carlo"] = mc.estimate
            row["mc_stderr"] = mc.stderr
        rows.append(row)
    return rows
