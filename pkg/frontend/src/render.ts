/** Pure view rendering: state in, HTML strings out (snapshot-friendly). */

import { escapeHtml, formatDbm, formatMHz, formatTimestamp } from "./format.js";
import type { ConsoleState, EventRecord } from "./types.js";

export function renderEventRow(event: EventRecord, artifactUrl: (id: string, name: string) => string): string {
  const links = event.artifacts
    .map(
      (name) =>
        `<a href="${escapeHtml(artifactUrl(event.event_id, name))}">${escapeHtml(name)}</a>`,
    )
    .join(" ");
  return (
    `<tr data-event="${escapeHtml(event.event_id)}">` +
    `<td>${formatTimestamp(event.t0_unix_ms)}</td>` +
    `<td>${formatMHz(event.peak_freq_hz)}</td>` +
    `<td>${formatDbm(event.peak_power_dbm)}</td>` +
    `<td>${links}</td>` +
    `</tr>`
  );
}

export function renderEventsTable(
  state: ConsoleState,
  artifactUrl: (id: string, name: string) => string,
): string {
  if (state.events.length === 0) {
    return `<p class="empty">No events recorded yet.</p>`;
  }
  const rows = state.events.map((e) => renderEventRow(e, artifactUrl)).join("");
  return (
    `<table class="events">` +
    `<thead><tr><th>time (UTC)</th><th>peak</th><th>power</th><th>artifacts</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderHealthBanner(state: ConsoleState): string {
  if (state.connected) {
    return "";
  }
  const stale =
    state.lastUpdateMs !== null
      ? ` Showing data from ${formatTimestamp(state.lastUpdateMs)}.`
      : "";
  const reason = state.lastError ? ` (${escapeHtml(state.lastError)})` : "";
  return `<div class="banner error">Server unreachable${reason}.${stale}</div>`;
}

export function renderControlStatus(state: ConsoleState): string {
  const pending = state.pendingControls;
  if (!pending) {
    return "";
  }
  const what = escapeHtml(
    Object.entries(pending.changes)
      .map(([k, v]) => `${k}=${v}`)
      .join(", "),
  );
  if (pending.confirmed) {
    return `<span class="status ok">applied: ${what}</span>`;
  }
  return `<span class="status pending">applies next sweep: ${what}</span>`;
}

export function renderRunState(state: ConsoleState): string {
  if (!state.plan) {
    return `<span class="runstate unknown">no control endpoint</span>`;
  }
  const alarm = state.plan.alarm
    ? ` <span class="alarm">ALARM: ${escapeHtml(state.plan.alarm)}</span>`
    : "";
  const label = state.plan.running ? "running" : "stopped";
  return `<span class="runstate ${label}">${label}</span>${alarm}`;
}

export interface RenderedView {
  banner: string;
  events: string;
  controlStatus: string;
  runState: string;
  eventCount: number;
}

/** Render everything; pure in the fetched state (same state, same strings). */
export function renderView(
  state: ConsoleState,
  artifactUrl: (id: string, name: string) => string,
): RenderedView {
  return {
    banner: renderHealthBanner(state),
    events: renderEventsTable(state, artifactUrl),
    controlStatus: renderControlStatus(state),
    runState: renderRunState(state),
    eventCount: state.events.length,
  };
}
