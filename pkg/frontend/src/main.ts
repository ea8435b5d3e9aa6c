/** DOM bootstrap: wire the poller, chart, event table and control form. */

import { ControlApi, RemoteApi } from "./api.js";
import { drawSpectrum } from "./chart.js";
import { applyControls } from "./controls.js";
import { renderView } from "./render.js";
import { ConsolePoller, DEFAULT_POLL_MS } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function numberOrNull(raw: string): number | null {
  if (raw.trim() === "") {
    return null;
  }
  const value = Number(raw);
  return Number.isFinite(value) ? value : NaN;
}

let cancelPoll: (() => void) | null = null;
let poller: ConsolePoller | null = null;
let remote: RemoteApi | null = null;
let control: ControlApi | null = null;

function redraw(): void {
  if (!poller || !remote) {
    return;
  }
  const api = remote;
  const view = renderView(poller.state, (id, name) => api.artifactUrl(id, name));
  el("banner").innerHTML = view.banner;
  el("events").innerHTML = view.events;
  el("control-status").innerHTML = view.controlStatus;
  el("run-state").innerHTML = view.runState;
  el("event-count").textContent = `${view.eventCount} event(s)`;
  const stale = el("stale");
  if (poller.state.lastUpdateMs !== null && !poller.state.connected) {
    stale.textContent = "stale";
    stale.className = "stale on";
  } else {
    stale.textContent = "";
    stale.className = "stale";
  }
  const canvas = el<HTMLCanvasElement>("chart");
  drawSpectrum(
    canvas,
    poller.state.spectrum,
    poller.state.plan ? poller.state.plan.threshold_dbm : null,
  );
}

function connect(): void {
  if (cancelPoll) {
    cancelPoll();
    cancelPoll = null;
  }
  const serverUrl = el<HTMLInputElement>("server-url").value.replace(/\/$/, "");
  const controlUrl = el<HTMLInputElement>("control-url").value.replace(/\/$/, "");
  const token = el<HTMLInputElement>("token").value.trim() || null;
  const pollMs = Number(el<HTMLInputElement>("poll-ms").value) || DEFAULT_POLL_MS;
  remote = new RemoteApi(serverUrl, token);
  control = controlUrl ? new ControlApi(controlUrl) : null;
  poller = new ConsolePoller(remote, control);
  const basePoll = poller;
  const origTick = basePoll.tick.bind(basePoll);
  basePoll.tick = async () => {
    const ran = await origTick();
    redraw();
    return ran;
  };
  cancelPoll = basePoll.start(pollMs);
}

async function submitControls(): Promise<void> {
  if (!poller || !control) {
    el("control-error").textContent = "no control endpoint configured";
    return;
  }
  const changes: Record<string, number> = {};
  const threshold = numberOrNull(el<HTMLInputElement>("threshold").value);
  const span = numberOrNull(el<HTMLInputElement>("span").value);
  const step = numberOrNull(el<HTMLInputElement>("step").value);
  if (threshold !== null) changes["threshold_dbm"] = threshold;
  if (span !== null) changes["span_hz"] = span;
  if (step !== null) changes["step_hz"] = step;
  const error = await applyControls(control, poller.state, changes);
  el("control-error").textContent = error ?? "";
  redraw();
}

document.addEventListener("DOMContentLoaded", () => {
  el("connect").addEventListener("click", connect);
  el("apply").addEventListener("click", () => void submitControls());
  el("stop").addEventListener("click", () => void control?.stop().then(() => poller?.tick()));
  el("start").addEventListener("click", () => void control?.start().then(() => poller?.tick()));
  connect();
});
