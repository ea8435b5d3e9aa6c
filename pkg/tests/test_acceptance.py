"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report lines as they complete.
"""

import hashlib
import re
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from pdwatch.codec import export_csv, frame_from_bytes, frame_to_bytes, read_iqf
from pdwatch.coverage import (
    DetectionModel,
    p_detect_analytic,
    p_detect_monte_carlo,
    p_detect_per_sweep,
    required_sweeps,
)
from pdwatch.device import FrontEndConfig, SimulatedFrontEnd
from pdwatch.dsp import (
    IqFrame,
    classify,
    dft_naive,
    fft,
    peak_search,
    spectrum_from_frame,
)
from pdwatch.errors import CorruptError, FormatError
from pdwatch.remote import RemoteStoreServer
from pdwatch.scene import Burst, CwTone, EmitterScene
from pdwatch.store import ArtifactStore
from pdwatch.sweep import SweepPlan, run_monitor, run_sweep, format_window_line
from pdwatch.syncagent import (
    AgentCrash,
    RemoteClient,
    RemoteUnavailable,
    SyncAgent,
)

from conftest import RecordingWebhook, random_frame, tone_scene, tone_source_dbm


def report(criterion: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[ACCEPTANCE] criterion {criterion:02d}: {status} - {detail}")


def fake_clock(start=1714564800000, step=11):
    holder = {"t": start - step}

    def clock():
        holder["t"] += step
        return holder["t"]

    return clock


LINE_RE = re.compile(
    r"cumulative: \d+, current: \d+ >>> cf MHz= (?P<cf>[\d.]+) , "
    r"span MHz= (?P<span>[\d.]+) , \[ max MHz= (?P<maxf>-?[\d.]+|-inf) , "
    r"max dBm= (?P<maxp>-?[\d.]+|-inf) \] \.\.\.(?P<label>noise|THRESHOLD)$"
)


def test_criterion_01_dft_oracle_equivalence():
    """fft vs naive DFT within 1e-9 over 200 randomized sizes, Parseval holds."""
    rng = np.random.default_rng(20240501)
    started = time.perf_counter()
    worst_rel = 0.0
    worst_parseval = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 2049))
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        n_fft = 1 << (n - 1).bit_length()
        padded = np.zeros(n_fft, dtype=complex)
        padded[:n] = x
        fast = fft(x, n_fft)
        naive = dft_naive(padded)
        rel = np.linalg.norm(fast - naive) / max(np.linalg.norm(naive), 1e-30)
        worst_rel = max(worst_rel, float(rel))
        energy_t = np.sum(np.abs(padded) ** 2)
        energy_f = np.sum(np.abs(fast) ** 2) / n_fft
        worst_parseval = max(worst_parseval, abs(energy_t - energy_f) / energy_t)
    elapsed = time.perf_counter() - started
    passed = worst_rel < 1e-9 and worst_parseval < 1e-9 and elapsed < 10.0
    report(
        1,
        passed,
        f"200 cases N in [2,2048]: max rel err {worst_rel:.2e}, "
        f"max Parseval err {worst_parseval:.2e}, {elapsed:.2f}s",
    )
    assert worst_rel < 1e-9
    assert worst_parseval < 1e-9
    assert elapsed < 10.0


def test_criterion_02_single_tone_capture():
    """315 MHz tone at -36 dBm: one event per sweep, 1-bin / 1.5 dB accuracy."""
    started = time.perf_counter()
    scene = tone_scene(315e6, -36.0, seed=20)
    plan = SweepPlan(
        f_start_hz=307e6, f_stop_hz=323e6, step_hz=4e6, span_hz=4e6,
        dwell_s=0.010, threshold_dbm=-50.0, sweep_period_target_s=0,
    )
    device = SimulatedFrontEnd(
        scene, FrontEndConfig(iq_rate_hz=4e6, span_hz=4e6, full_scale_v=0.02)
    )
    clock = fake_clock()
    bin_hz = 4e6 / plan.n_fft
    events = []
    for _ in range(2):  # exactly one event per sweep, sweep after sweep
        result = run_sweep(plan, device, clock=clock)
        assert len(result.events) == 1
        events.append(result.events[0])
    freq_err = max(abs(e.peak_freq_hz - 315e6) for e in events)
    power_err = max(abs(e.peak_power_dbm - (-36.0)) for e in events)
    elapsed = time.perf_counter() - started
    passed = freq_err <= bin_hz and power_err <= 1.5 and elapsed < 30.0
    report(
        2,
        passed,
        f"1 event/sweep x2; freq err {freq_err:.1f} Hz (bin {bin_hz:.1f}), "
        f"power err {power_err:.3f} dB, {elapsed:.2f}s",
    )
    assert freq_err <= bin_hz
    assert power_err <= 1.5
    assert elapsed < 30.0


def test_criterion_03_scan_log_reproduction():
    """Overlapped 20 MHz windows around a 768 MHz tone reproduce the log shape."""
    received_dbm = -35.704
    attenuation = tone_source_dbm(0.5) - received_dbm
    scene = EmitterScene(
        emitters=(CwTone(freq_hz=768e6, amplitude_v=0.5, attenuation_db=attenuation),),
        noise_density_dbm_hz=-174.0,
        seed=15,
    )
    plan = SweepPlan(
        f_start_hz=730e6, f_stop_hz=810e6, step_hz=10e6, span_hz=20e6,
        dwell_s=0.010, threshold_dbm=-50.0, sweep_period_target_s=0,
    )
    device = SimulatedFrontEnd(
        scene, FrontEndConfig(iq_rate_hz=32e6, span_hz=20e6, full_scale_v=0.02)
    )
    lines = []
    counters = {"cumulative": 0}

    def on_window(report_):
        counters["cumulative"] += report_.n_avg
        lines.append(format_window_line(report_, counters["cumulative"], report_.n_avg))

    run_sweep(plan, device, clock=fake_clock(), on_window=on_window)
    assert len(lines) == 9  # cf 730..810
    parsed = []
    for line in lines:
        match = LINE_RE.search(line)
        assert match, f"line does not match the log shape: {line!r}"
        parsed.append(match.groupdict())
    threshold_cfs = {p["cf"] for p in parsed if p["label"] == "THRESHOLD"}
    noise_cfs = {p["cf"] for p in parsed if p["label"] == "noise"}
    # the tone at 768 MHz is inside the 760 and 770 MHz windows only
    shape_ok = threshold_cfs == {"760.000", "770.000"} and len(noise_cfs) == 7
    bin_mhz = 32.0 / 8192
    freq_errs = [
        abs(float(p["maxf"]) - 768.0) for p in parsed if p["label"] == "THRESHOLD"
    ]
    power_errs = [
        abs(float(p["maxp"]) - received_dbm) for p in parsed if p["label"] == "THRESHOLD"
    ]
    passed = shape_ok and max(freq_errs) <= bin_mhz and max(power_errs) <= 1.5
    report(
        3,
        passed,
        f"THRESHOLD at cf {sorted(threshold_cfs)} MHz; peak within "
        f"{max(freq_errs) * 1e3:.1f} kHz of 768 MHz (bin {bin_mhz * 1e3:.1f} kHz); "
        f"power within {max(power_errs):.3f} dB of {received_dbm}",
    )
    assert shape_ok
    assert max(freq_errs) <= bin_mhz
    assert max(power_errs) <= 1.5


def dual_signal_scene(seed=21):
    attenuation = tone_source_dbm(0.5) - (-35.704)
    return EmitterScene(
        emitters=(
            CwTone(freq_hz=768e6, amplitude_v=0.5, attenuation_db=attenuation),
            Burst(center_freq_hz=2402e6, duty_cycle=1.0, burst_len_s=1.0, power_dbm=-60.0),
        ),
        noise_density_dbm_hz=-174.0,
        seed=seed,
    )


def test_criterion_04_dual_signal_capture():
    """768 MHz tone + -60 dBm burst: both at threshold -70, tone only at -50."""
    started = time.perf_counter()
    scene = dual_signal_scene()
    base = dict(
        f_start_hz=760e6, f_stop_hz=2400e6, step_hz=32e6, span_hz=32e6,
        dwell_s=0.010, sweep_period_target_s=0,
    )
    bin_hz = 32e6 / 8192

    def sweep_with(threshold):
        device = SimulatedFrontEnd(
            scene, FrontEndConfig(iq_rate_hz=32e6, span_hz=32e6, full_scale_v=0.02)
        )
        plan = SweepPlan(threshold_dbm=threshold, **base)
        return run_sweep(plan, device, clock=fake_clock())

    sensitive = sweep_with(-70.0)
    freqs = sorted(e.peak_freq_hz for e in sensitive.events)
    both_seen = (
        len(sensitive.events) == 2
        and abs(freqs[0] - 768e6) <= bin_hz
        and abs(freqs[1] - 2402e6) <= bin_hz
    )
    strict = sweep_with(-50.0)
    burst_rejected = all(abs(e.peak_freq_hz - 2402e6) > 10e6 for e in strict.events)
    tone_still_seen = any(abs(e.peak_freq_hz - 768e6) <= bin_hz for e in strict.events)
    elapsed = time.perf_counter() - started
    passed = both_seen and burst_rejected and tone_still_seen and elapsed < 60.0
    report(
        4,
        passed,
        f"threshold -70: events at {[f / 1e6 for f in freqs]} MHz; "
        f"threshold -50: burst suppressed ({len(strict.events)} event(s)); {elapsed:.1f}s",
    )
    assert both_seen
    assert burst_rejected
    assert tone_still_seen
    assert elapsed < 60.0


def test_criterion_05_pruning_soundness(tmp_path):
    """No events -> no .iqf artifacts; persisted set == event set always."""
    plan = SweepPlan(
        f_start_hz=307e6, f_stop_hz=323e6, step_hz=4e6, span_hz=4e6,
        dwell_s=0.010, threshold_dbm=-50.0, sweep_period_target_s=0,
    )

    def run_store(scene, sub):
        store = ArtifactStore(tmp_path / sub)
        device = SimulatedFrontEnd(
            scene, FrontEndConfig(iq_rate_hz=4e6, span_hz=4e6, full_scale_v=0.02)
        )
        results = list(
            run_monitor(plan, device, store, iterations=1, clock=fake_clock())
        )
        return store, results

    store, results = run_store(EmitterScene(noise_density_dbm_hz=-174.0, seed=8), "empty")
    empty_iqf = list((tmp_path / "empty").glob("*.iqf"))
    stitched = list((tmp_path / "empty").glob("sweep_*_stitched.csv"))
    empty_ok = empty_iqf == [] and len(stitched) == 1 and results[0].events == []

    rng = np.random.default_rng(77)
    property_ok = True
    mismatches = []
    for trial in range(6):
        emitters = []
        for _ in range(int(rng.integers(0, 4))):
            window = int(rng.integers(0, 5))
            freq = 307e6 + window * 4e6 + float(rng.uniform(-1.5e6, 1.5e6))
            level = float(rng.choice([-30.0, -42.0, -75.0, -100.0]))
            emitters.append(
                Burst(center_freq_hz=freq, duty_cycle=1.0, burst_len_s=1.0, power_dbm=level)
            )
        scene = EmitterScene(
            emitters=tuple(emitters),
            noise_density_dbm_hz=-174.0,
            seed=int(rng.integers(0, 2 ** 31)),
        )
        store, results = run_store(scene, f"trial{trial}")
        persisted = {p.name for p in (tmp_path / f"trial{trial}").glob("*.iqf")}
        expected = {Path(e.iq_path).name for r in results for e in r.events}
        if persisted != expected:
            property_ok = False
            mismatches.append((trial, persisted, expected))
    passed = empty_ok and property_ok
    report(
        5,
        passed,
        f"empty scene: 0 .iqf + stitched CSV written; "
        f"persisted==events over 6 randomized scenes ({'ok' if property_ok else mismatches})",
    )
    assert empty_ok
    assert property_ok


GOLDEN = Path(__file__).parent / "data" / "golden.iqf"
GOLDEN_SHA256 = "12c4e0e4a3aae18c3dea5dcf4c718223ef39512437e8b063e560fc75cfa85d70"


def test_criterion_06_codec_integrity(tmp_path):
    """500 bit-exact round-trips, guaranteed fuzz detection, exact CSV, golden."""
    rng = np.random.default_rng(606)
    for _ in range(500):
        frame = random_frame(rng, max_samples=300)
        blob = frame_to_bytes(frame)
        back = frame_from_bytes(blob)
        assert back == frame
        assert frame_to_bytes(back) == blob
    # single-bit corruption always detected
    blob = bytearray(frame_to_bytes(random_frame(rng, max_samples=200)))
    detected = 0
    flips = 400
    for _ in range(flips):
        pos = int(rng.integers(0, len(blob) * 8))
        corrupted = bytearray(blob)
        corrupted[pos // 8] ^= 1 << (pos % 8)
        try:
            frame_from_bytes(bytes(corrupted))
        except (CorruptError, FormatError):
            detected += 1
    # CSV re-parse reproduces exact ADC integers
    frame = random_frame(rng, max_samples=2000)
    csv_path = tmp_path / "frame.csv"
    export_csv(frame, csv_path)
    rows = csv_path.read_text().splitlines()[1:]
    got = np.array(
        [(int(r.split(",")[2]), int(r.split(",")[3])) for r in rows], dtype=np.int16
    )
    csv_exact = np.array_equal(got, frame.samples)
    golden_ok = hashlib.sha256(GOLDEN.read_bytes()).hexdigest() == GOLDEN_SHA256
    golden_frame = read_iqf(GOLDEN)
    golden_ok = golden_ok and golden_frame.center_freq_hz == 760e6
    passed = detected == flips and csv_exact and golden_ok
    report(
        6,
        passed,
        f"500 round-trips bit-exact; {detected}/{flips} bit flips detected; "
        f"CSV ADC integers exact; golden fixture stable",
    )
    assert detected == flips
    assert csv_exact
    assert golden_ok


class ChaosClient(RemoteClient):
    """Transport that fails a seeded fraction of PUTs while faults are on."""

    def __init__(self, *args, rng=None, fail_prob=0.25, **kwargs):
        super().__init__(*args, **kwargs)
        self.rng = rng or np.random.default_rng(0)
        self.fail_prob = fail_prob
        self.faults_on = True

    def put_artifact(self, *args, **kwargs):
        if self.faults_on and self.rng.random() < self.fail_prob:
            raise RemoteUnavailable("injected chaos fault")
        return super().put_artifact(*args, **kwargs)


def _write_event(data_dir: Path, idx: int) -> str:
    from pdwatch.store import append_jsonl

    event_id = f"ev{idx:03d}"
    iq = data_dir / f"{event_id}.iqf"
    spec = data_dir / f"{event_id}_spectrum.csv"
    iq.write_bytes(f"iq-bytes-{idx}".encode() * 50)
    spec.write_text(f"freq_hz,power_dbm\n{idx}.0,-40.0\n")
    append_jsonl(
        data_dir / "events.jsonl",
        {
            "event_id": event_id,
            "t0_unix_ms": 1000 + idx,
            "peak_freq_hz": 300e6 + idx * 1e6,
            "peak_power_dbm": -40.0,
            "threshold_dbm": -50.0,
            "sweep_id": "chaos",
            "window_index": idx % 5,
            "iq_path": str(iq),
            "spectrum_path": str(spec),
            "upload_state": "pending",
        },
    )
    return event_id


def test_criterion_07_sync_correctness(tmp_path):
    """>= 10 agent kills + network faults: exact event set, single objects,
    one notification per (event, subscriber)."""
    data = tmp_path / "data"
    data.mkdir()
    server = RemoteStoreServer(tmp_path / "remote", notifier_backoff_s=0.02).start()
    webhook = RecordingWebhook(fail_first=1)
    try:
        RemoteClient(server.url).post_subscription("webhook", webhook.url)
        rng = np.random.default_rng(707)
        expected_ids = {_write_event(data, i) for i in range(12)}
        chaos = ChaosClient(server.url, rng=rng, fail_prob=0.25)
        crashes = 0
        added_rest = False
        deadline = time.time() + 90

        def make_agent(hook):
            return SyncAgent(
                index_path=data / "events.jsonl",
                sweeps_index_path=data / "sweeps.jsonl",
                state_path=tmp_path / "sync_state.json",
                client=chaos,
                backoff_base_s=0.01,
                backoff_cap_s=0.05,
                jitter_frac=0.1,
                parallelism=int(rng.integers(1, 4)),
                fault_hook=hook,
            )

        while crashes < 12 and time.time() < deadline:
            crash_after = int(rng.integers(2, 12))
            calls = {"n": 0}

            def hook(point):
                calls["n"] += 1
                if calls["n"] >= crash_after:
                    raise AgentCrash(point)

            agent = make_agent(hook)
            try:
                for _ in range(200):
                    agent.run_once()
                    time.sleep(0.002)
            except AgentCrash:
                crashes += 1
            if not added_rest and crashes >= 5:
                expected_ids |= {_write_event(data, i) for i in range(12, 25)}
                added_rest = True

        assert crashes >= 10, f"only {crashes} injected crashes"
        assert added_rest
        # faults clear; a clean agent session must converge within 60 s
        chaos.faults_on = False
        clear_time = time.time()
        final_agent = make_agent(lambda point: None)
        while time.time() - clear_time < 60:
            final_agent.run_once()
            server_ids = {e["event_id"] for e in RemoteClient(server.url).get_events()}
            if server_ids == expected_ids and final_agent.all_acked():
                break
            time.sleep(0.05)
        convergence_s = time.time() - clear_time
        events = RemoteClient(server.url).get_events()
        server_ids = [e["event_id"] for e in events]
        set_equal = set(server_ids) == expected_ids
        no_dupes = len(server_ids) == len(set(server_ids))

        # duplicate upload of an already-acked record: one stored object
        record = final_agent.records["ev000/ev000.iqf"]
        status, payload = chaos.put_artifact(
            "ev000", "ev000.iqf", Path(record.path).read_bytes(), record.content_hash
        )
        dedupe_ok = status == 200 and payload["deduped"] is True
        stored_files = list((tmp_path / "remote" / "artifacts" / "ev000").glob("ev000.iqf*"))
        single_object = [p.name for p in stored_files] == ["ev000.iqf"]

        assert server.notifier.wait_idle(30)
        notify_counts = [webhook.count_for(eid) for eid in sorted(expected_ids)]
        notify_ok = all(c == 1 for c in notify_counts)

        passed = (
            set_equal and no_dupes and dedupe_ok and single_object
            and notify_ok and convergence_s < 60
        )
        report(
            7,
            passed,
            f"{crashes} kills + chaos faults: {len(server_ids)}/{len(expected_ids)} events, "
            f"set equal={set_equal}, no dupes={no_dupes}, converged in {convergence_s:.1f}s; "
            f"dedupe single object={single_object}; notifications per event all == 1",
        )
        assert set_equal and no_dupes
        assert dedupe_ok and single_object
        assert notify_ok
        assert convergence_s < 60
    finally:
        webhook.close()
        server.stop()


def test_criterion_08_coverage_analyzer():
    """Monte Carlo within 3 sigma of the closed form over the exposure grid."""
    started = time.perf_counter()
    results = []
    ok = True
    for exposure in (0.01, 0.1, 1.0, 3.0, 10.0):
        model = DetectionModel(
            pulse_rate_hz=exposure / 0.010, dwell_s=0.010, n_windows=10, n_sweeps=1
        )
        analytic = p_detect_analytic(model)
        mc = p_detect_monte_carlo(model, trials=100_000, seed=int(exposure * 1000) + 3)
        sigmas = abs(mc.estimate - analytic) / max(mc.stderr, 1e-12)
        results.append((exposure, analytic, mc.estimate, sigmas))
        ok = ok and sigmas <= 3.0
    # inverse consistency on a randomized grid
    rng = np.random.default_rng(808)
    inverse_ok = True
    for _ in range(200):
        p = float(rng.uniform(1e-4, 0.999))
        target = float(rng.uniform(1e-4, 0.9999))
        model = DetectionModel(
            pulse_rate_hz=p / 0.010, dwell_s=0.010, n_windows=5, poisson=False
        )
        per_sweep = p_detect_per_sweep(model)
        m = required_sweeps(model, target)
        if 1 - (1 - per_sweep) ** m < target - 1e-12:
            inverse_ok = False
        if m > 1 and 1 - (1 - per_sweep) ** (m - 1) >= target:
            inverse_ok = False
    elapsed = time.perf_counter() - started
    passed = ok and inverse_ok and elapsed < 30.0
    grid = ", ".join(f"{e}: {s:.2f} sigma" for e, _, _, s in results)
    report(8, passed, f"grid deviations [{grid}]; inverse-consistency 200/200; {elapsed:.1f}s")
    assert ok, results
    assert inverse_ok
    assert elapsed < 30.0


def test_criterion_09_end_to_end_latency(tmp_path):
    """scan + sync + serve together: events visible within sweep period + 2 s."""
    data = tmp_path / "data"
    server = RemoteStoreServer(tmp_path / "remote").start()
    stop = threading.Event()
    agent = SyncAgent(
        index_path=data / "events.jsonl",
        sweeps_index_path=data / "sweeps.jsonl",
        state_path=tmp_path / "sync_state.json",
        client=RemoteClient(server.url),
        backoff_base_s=0.05,
        poll_interval_s=0.1,
        parallelism=2,
    )
    agent_thread = threading.Thread(target=agent.run, kwargs={"stop": stop}, daemon=True)
    agent_thread.start()
    try:
        scene = tone_scene(315e6, -36.0, seed=33)
        plan = SweepPlan(
            f_start_hz=307e6, f_stop_hz=323e6, step_hz=4e6, span_hz=4e6,
            dwell_s=0.010, threshold_dbm=-50.0, sweep_period_target_s=0,
        )
        device = SimulatedFrontEnd(
            scene, FrontEndConfig(iq_rate_hz=4e6, span_hz=4e6, full_scale_v=0.02)
        )
        store = ArtifactStore(data)
        client = RemoteClient(server.url)
        latencies = []
        ok = True
        for result in run_monitor(plan, device, store, iterations=2):
            budget = result.duration_s + 2.0
            flushed = time.monotonic()
            expected = {e.event_id for e in result.events}
            assert expected, "sweep produced no events"
            visible = False
            while time.monotonic() - flushed < budget + 5:
                ids = {e["event_id"] for e in client.get_events()}
                if expected <= ids:
                    visible = True
                    break
                time.sleep(0.05)
            latency = time.monotonic() - flushed
            latencies.append((latency, budget))
            ok = ok and visible and latency <= budget
        passed = ok
        detail = ", ".join(f"{l:.2f}s (budget {b:.2f}s)" for l, b in latencies)
        report(9, passed, f"event visibility latency per sweep: {detail}")
        assert ok, latencies
    finally:
        stop.set()
        agent_thread.join(timeout=10)
        server.stop()


def test_criterion_10_throughput_benchmark():
    """Informative: frame->spectrum->classify rate on one core vs 25 MS/s target."""
    rng = np.random.default_rng(1010)
    n = 560_000  # 10 ms at the full 56 MS/s rate
    frame = IqFrame(
        center_freq_hz=760e6,
        span_hz=40e6,
        iq_rate_hz=56e6,
        t0_unix_ms=0,
        samples=rng.integers(-2000, 2000, size=(n, 2), dtype=np.int16),
    )
    for _ in range(2):  # warmup
        spectrum = spectrum_from_frame(frame, 8192)
    reps = 8
    started = time.perf_counter()
    for _ in range(reps):
        spectrum = spectrum_from_frame(frame, 8192)
        freq, power = peak_search(spectrum)
        classify(power, -50.0)
    elapsed = time.perf_counter() - started
    rate = n * reps / elapsed
    target = 25e6
    met = rate >= target
    report(
        10,
        True,
        f"measured {rate / 1e6:.1f} MS/s frame->spectrum->classify "
        f"({'meets' if met else 'BELOW'} the informative 25 MS/s target; not hard-fail)",
    )
    assert rate > 0
    if not met:
        import warnings

        warnings.warn(f"throughput {rate / 1e6:.1f} MS/s below the 25 MS/s target")
