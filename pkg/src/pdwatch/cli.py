"""Operator command line.

Subcommands::

    scan      run the sweeping monitor against a simulated scene
    decode    batch-decode .iqf recordings to CSV
    analyze   detection-probability tables for repetitive pulses
    serve     run the remote store HTTP service
    sync      run the local sync agent against a remote store
    simulate  capture one frame from a scene into a .iqf fixture

Configuration merges, lowest to highest precedence: built-in defaults,
--config JSON file, PDWATCH_* environment variables, command-line flags.
Unknown config-file keys are rejected.  Exit codes: 0 clean, 1 runtime
failure, 2 bad usage/configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .codec import batch_decode, export_csv, write_iqf
from .control import ScanControlServer
from .coverage import DetectionModel, detection_table, required_sweeps
from .device import FrontEndConfig, SimulatedFrontEnd
from .errors import ConfigError, PdWatchError
from .remote import RemoteStoreServer
from .scene import EmitterScene, load_scene
from .store import ArtifactStore
from .sweep import MonitorController, SweepPlan, run_monitor
from .syncagent import RemoteClient, SyncAgent

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_ENV_KEYS = {
    "PDWATCH_DATA_DIR": "data_dir",
    "PDWATCH_SCENE": "scene",
    "PDWATCH_REMOTE_URL": "remote_url",
    "PDWATCH_REMOTE_TOKEN": "remote_token",
    "PDWATCH_BIND": "bind",
    "PDWATCH_CONTROL_BIND": "control_bind",
}

_TOP_KEYS = {
    "data_dir",
    "scene",
    "remote_url",
    "remote_token",
    "bind",
    "control_bind",
    "console_dir",
    "plan",
    "frontend",
}

_PLAN_KEYS = {f.name for f in dataclass_fields(SweepPlan)}
_FRONTEND_KEYS = {"iq_rate_hz", "adc_bits", "full_scale_v", "cal_constant"}


def load_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for section, allowed in (("plan", _PLAN_KEYS), ("frontend", _FRONTEND_KEYS)):
        sub = data.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        bad = set(sub) - allowed
        if bad:
            raise ConfigError(f"unknown {section} keys {sorted(bad)}")
    return data


def merged_settings(args: argparse.Namespace) -> dict:
    settings: dict = {"plan": {}, "frontend": {}}
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
        settings.setdefault("plan", {})
        settings.setdefault("frontend", {})
    for env_key, name in _ENV_KEYS.items():
        if env_key in os.environ:
            settings[name] = os.environ[env_key]
    flag_plan = {
        "f_start_hz": getattr(args, "f_start", None),
        "f_stop_hz": getattr(args, "f_stop", None),
        "step_hz": getattr(args, "step", None),
        "span_hz": getattr(args, "span", None),
        "dwell_s": getattr(args, "dwell", None),
        "threshold_dbm": getattr(args, "threshold", None),
        "n_fft": getattr(args, "n_fft", None),
        "sweep_period_target_s": getattr(args, "sweep_period", None),
    }
    settings["plan"].update({k: v for k, v in flag_plan.items() if v is not None})
    flag_fe = {
        "iq_rate_hz": getattr(args, "iq_rate", None),
        "adc_bits": getattr(args, "adc_bits", None),
        "full_scale_v": getattr(args, "full_scale", None),
    }
    settings["frontend"].update({k: v for k, v in flag_fe.items() if v is not None})
    for flag in ("data_dir", "scene", "remote_url", "remote_token", "bind", "control_bind"):
        value = getattr(args, flag, None)
        if value is not None:
            settings[flag] = value
    return settings


def build_plan(settings: dict) -> SweepPlan:
    return SweepPlan(**settings.get("plan", {}))


def build_frontend(settings: dict, span_hz: float) -> FrontEndConfig:
    fe = dict(settings.get("frontend", {}))
    fe["span_hz"] = span_hz
    if "iq_rate_hz" in fe and fe["iq_rate_hz"] < span_hz:
        raise ConfigError("frontend iq_rate_hz must be >= the plan span")
    fe.setdefault("iq_rate_hz", max(56e6, span_hz))
    try:
        return FrontEndConfig(**fe)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_bind(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"bind address must be HOST:PORT, got {value!r}")
    return host, int(port)


def _load_scene_or_default(settings: dict) -> EmitterScene:
    if settings.get("scene"):
        return load_scene(settings["scene"])
    return EmitterScene()


# -- subcommands ----------------------------------------------------------------


def cmd_scan(args: argparse.Namespace) -> int:
    settings = merged_settings(args)
    plan = build_plan(settings)
    scene = _load_scene_or_default(settings)
    device = SimulatedFrontEnd(scene, build_frontend(settings, plan.span_hz))
    store = ArtifactStore(settings.get("data_dir", "pdwatch-data"), max_bytes=args.max_store_bytes)
    controller = MonitorController(plan)
    control_server = None
    if settings.get("control_bind"):
        host, port = _parse_bind(settings["control_bind"])
        control_server = ScanControlServer(controller, host, port).start()
        print(f"control endpoint at {control_server.url}", flush=True)

    def on_signal(signum, frame):
        controller.request_shutdown()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)

    iterations = None if args.forever else args.iterations
    try:
        for result in run_monitor(
            plan,
            device,
            store,
            iterations=iterations,
            controller=controller,
            on_line=lambda line: print(line, flush=True),
        ):
            status = "complete" if result.complete else "partial"
            print(
                f"sweep {result.sweep_id} {status}: {len(result.events)} event(s), "
                f"{len(result.reports)} window(s), {result.duration_s:.3f}s",
                flush=True,
            )
            for event in result.events:
                print(
                    f"  event {event.event_id[:8]} @ "
                    f"{event.peak_freq_hz / 1e6:.3f} MHz, "
                    f"{event.peak_power_dbm:.3f} dBm -> {event.iq_path}",
                    flush=True,
                )
    finally:
        if control_server is not None:
            control_server.stop()
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    dir_in = Path(args.dir_in)
    if not dir_in.is_dir():
        print(f"error: input directory {dir_in} does not exist", file=sys.stderr)
        return EXIT_USAGE
    manifest = batch_decode(dir_in, args.dir_out)
    for entry in manifest:
        if entry.ok:
            print(f"ok    {entry.input} -> {entry.output}")
        else:
            print(f"FAIL  {entry.input}: {entry.error}")
    failures = sum(1 for e in manifest if not e.ok)
    print(f"decoded {len(manifest) - failures}/{len(manifest)} file(s), {failures} failure(s)")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        model = DetectionModel(
            pulse_rate_hz=args.rate,
            dwell_s=args.dwell,
            n_windows=args.windows,
            window_overhead_s=args.overhead,
            poisson=not args.fixed_period,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sweep_counts = sorted(set(args.sweeps + [1]))
    rows = detection_table(model, sweep_counts, trials=args.trials, seed=args.seed)
    if args.csv:
        cols = list(rows[0])
        print(",".join(cols))
        for row in rows:
            print(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
    else:
        print(
            f"pulse rate {model.pulse_rate_hz:g}/s, dwell {model.dwell_s * 1e3:g} ms, "
            f"{model.n_windows} windows -> revisit period {model.revisit_period_s:.3f} s"
        )
        header = f"{'sweeps':>8} {'elapsed_s':>10} {'P(analytic)':>12}"
        if args.trials:
            header += f" {'P(monte carlo)':>15} {'stderr':>9}"
        print(header)
        for row in rows:
            line = f"{row['sweeps']:>8} {row['elapsed_s']:>10.3f} {row['p_analytic']:>12.6f}"
            if args.trials:
                line += f" {row['p_monte_carlo']:>15.6f} {row['mc_stderr']:>9.6f}"
            print(line)
    try:
        needed = required_sweeps(model, args.target_p)
        print(f"sweeps needed for P >= {args.target_p}: {needed}")
    except PdWatchError as exc:
        print(f"target {args.target_p} unreachable: {exc}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    settings = merged_settings(args)
    host, port = _parse_bind(settings.get("bind", "127.0.0.1:8780"))
    server = RemoteStoreServer(
        root=settings.get("data_dir", "pdwatch-remote"),
        host=host,
        port=port,
        token=settings.get("remote_token"),
        console_dir=settings.get("console_dir") or args.console_dir,
    )
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *a: stop.set())
    signal.signal(signal.SIGTERM, lambda *a: stop.set())
    try:
        server.start()
    except OSError as exc:
        print(f"error: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"remote store serving at {server.url} (data root {server.root})", flush=True)
    stop.wait()
    server.stop()
    return EXIT_OK


def cmd_sync(args: argparse.Namespace) -> int:
    settings = merged_settings(args)
    remote_url = settings.get("remote_url")
    if not remote_url:
        print("error: --remote URL (or PDWATCH_REMOTE_URL) is required", file=sys.stderr)
        return EXIT_USAGE
    index_path = Path(args.index)
    state_path = Path(args.state) if args.state else index_path.parent / "sync_state.json"
    sweeps_path = (
        Path(args.sweeps_index) if args.sweeps_index else index_path.parent / "sweeps.jsonl"
    )
    agent = SyncAgent(
        index_path=index_path,
        sweeps_index_path=sweeps_path,
        state_path=state_path,
        client=RemoteClient(remote_url, token=settings.get("remote_token")),
        poll_interval_s=args.interval,
        parallelism=args.parallelism,
        backoff_base_s=args.backoff_base,
        backoff_cap_s=args.backoff_cap,
    )
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *a: stop.set())
    signal.signal(signal.SIGTERM, lambda *a: stop.set())
    print(
        f"sync agent: index {index_path} -> {remote_url} (state {state_path})",
        flush=True,
    )
    agent.run(stop=stop)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scene = load_scene(args.scene)
    config = FrontEndConfig(
        iq_rate_hz=args.iq_rate,
        span_hz=args.span if args.span else args.iq_rate,
        full_scale_v=args.full_scale,
    )
    device = SimulatedFrontEnd(scene, config)
    device.tune(args.center)
    frame = device.acquire(args.dwell, t0_unix_ms=args.t0_ms)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_bytes = write_iqf(frame, out)
    print(f"wrote {out} ({n_bytes} bytes, {frame.n_samples} samples)")
    if args.csv_out:
        rows = export_csv(frame, args.csv_out)
        print(f"wrote {args.csv_out} ({rows} rows)")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdwatch",
        description="Swept-spectrum RF event monitor (simulated front end).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="run the sweeping monitor")
    scan.add_argument("--config", help="JSON config file")
    scan.add_argument("--scene", help="scene JSON (default: empty scene)")
    scan.add_argument("--data-dir", help="artifact directory (default pdwatch-data)")
    group = scan.add_mutually_exclusive_group()
    group.add_argument("--iterations", type=int, default=1, help="sweeps to run (default 1)")
    group.add_argument("--forever", action="store_true", help="sweep until interrupted")
    scan.add_argument("--f-start", type=float, help="sweep start Hz (default 100e6)")
    scan.add_argument("--f-stop", type=float, help="sweep stop Hz (default 2500e6)")
    scan.add_argument("--step", type=float, help="window step Hz (default 40e6)")
    scan.add_argument("--span", type=float, help="window span Hz (default 40e6)")
    scan.add_argument("--dwell", type=float, help="dwell seconds (default 0.010)")
    scan.add_argument("--threshold", type=float, help="event threshold dBm (default -50)")
    scan.add_argument("--n-fft", type=int, help="FFT size (default 8192)")
    scan.add_argument("--sweep-period", type=float, help="target sweep period s (default 0.6)")
    scan.add_argument("--iq-rate", type=float, help="front-end sample rate (default 56e6)")
    scan.add_argument("--adc-bits", type=int, help="ADC bits, 8-16 (default 16)")
    scan.add_argument("--full-scale", type=float, help="ADC full scale volts (default 1.0)")
    scan.add_argument("--control-bind", help="HOST:PORT for the live control endpoint")
    scan.add_argument("--max-store-bytes", type=int, default=None, help="store watermark")
    scan.set_defaults(func=cmd_scan)

    decode = sub.add_parser("decode", help="batch-decode .iqf files to CSV")
    decode.add_argument("--in", dest="dir_in", required=True, help="input directory")
    decode.add_argument("--out", dest="dir_out", required=True, help="output directory")
    decode.set_defaults(func=cmd_decode)

    analyze = sub.add_parser("analyze", help="detection probability planning table")
    analyze.add_argument("--rate", type=float, required=True, help="pulses per second")
    analyze.add_argument("--dwell", type=float, default=0.010, help="dwell seconds")
    analyze.add_argument("--windows", type=int, default=61, help="windows per sweep")
    analyze.add_argument("--overhead", type=float, default=0.0, help="per-window overhead s")
    analyze.add_argument("--fixed-period", action="store_true", help="periodic (not Poisson)")
    analyze.add_argument(
        "--sweeps",
        type=int,
        nargs="*",
        default=[1, 2, 5, 10, 20, 50],
        help="sweep counts to tabulate",
    )
    analyze.add_argument("--target-p", type=float, default=0.99, help="target probability")
    analyze.add_argument("--trials", type=int, default=0, help="Monte Carlo trials (0 = skip)")
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--csv", action="store_true", help="emit CSV instead of a table")
    analyze.set_defaults(func=cmd_analyze)

    serve = sub.add_parser("serve", help="run the remote store service")
    serve.add_argument("--config", help="JSON config file")
    serve.add_argument("--bind", help="HOST:PORT (default 127.0.0.1:8780)")
    serve.add_argument("--data-dir", help="storage root (default pdwatch-remote)")
    serve.add_argument("--remote-token", dest="remote_token", help="require this bearer token")
    serve.add_argument("--console-dir", help="serve the operator console from this directory")
    serve.set_defaults(func=cmd_serve)

    sync = sub.add_parser("sync", help="run the local sync agent")
    sync.add_argument("--config", help="JSON config file")
    sync.add_argument("--index", required=True, help="path to events.jsonl")
    sync.add_argument("--sweeps-index", help="path to sweeps.jsonl (default: sibling)")
    sync.add_argument("--state", help="agent state file (default: sibling sync_state.json)")
    sync.add_argument("--remote", dest="remote_url", help="remote store base URL")
    sync.add_argument("--remote-token", dest="remote_token")
    sync.add_argument("--interval", type=float, default=0.5, help="poll interval seconds")
    sync.add_argument("--parallelism", type=int, default=4, help="upload workers")
    sync.add_argument("--backoff-base", type=float, default=1.0, help="retry backoff base s")
    sync.add_argument("--backoff-cap", type=float, default=60.0, help="retry backoff cap s")
    sync.set_defaults(func=cmd_sync)

    simulate = sub.add_parser("simulate", help="capture one frame from a scene to .iqf")
    simulate.add_argument("--scene", required=True, help="scene JSON file")
    simulate.add_argument("--center", type=float, required=True, help="tuned center Hz")
    simulate.add_argument("--out", required=True, help="output .iqf path")
    simulate.add_argument("--csv-out", help="also decode to this CSV path")
    simulate.add_argument("--dwell", type=float, default=0.010)
    simulate.add_argument("--iq-rate", type=float, default=4e6)
    simulate.add_argument("--span", type=float, default=None)
    simulate.add_argument("--full-scale", type=float, default=1.0)
    simulate.add_argument("--t0-ms", type=int, default=0, help="frame timestamp (unix ms)")
    simulate.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_OK
    except PdWatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
