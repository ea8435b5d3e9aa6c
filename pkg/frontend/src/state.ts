/** Poll loop: fetch events + spectrum + plan, keep one in-flight poll. */

import type { ControlApi, RemoteApi } from "./api.js";
import { minMaxDecimate, parseSpectrumCsv } from "./decimate.js";
import type { ConsoleState } from "./types.js";
import { initialState } from "./types.js";

export const DEFAULT_POLL_MS = 2000;

export class ConsolePoller {
  readonly state: ConsoleState = initialState();
  private cursorMs: number | null = null;
  private seen = new Set<string>();
  private inflight = false;
  coalescedPolls = 0;

  constructor(
    private api: RemoteApi,
    private control: ControlApi | null = null,
    private now: () => number = Date.now,
  ) {}

  /**
   * One poll pass.  Overlapping calls coalesce: if a poll is already in
   * flight the call returns false immediately instead of stacking requests.
   */
  async tick(): Promise<boolean> {
    if (this.inflight) {
      this.coalescedPolls++;
      return false;
    }
    this.inflight = true;
    try {
      // re-fetch the cursor millisecond itself (the server filter is
      // strictly-greater) and dedupe by event id, so same-ms events
      // registered between polls are never missed
      const since = this.cursorMs === null ? null : this.cursorMs - 1;
      const fresh = await this.api.getEvents(since);
      for (const event of fresh) {
        if (!this.seen.has(event.event_id)) {
          this.seen.add(event.event_id);
          this.state.events.unshift(event); // newest at top
          if (event.t0_unix_ms > (this.cursorMs ?? Number.NEGATIVE_INFINITY)) {
            this.cursorMs = event.t0_unix_ms;
          }
        }
      }
      const csv = await this.api.getLatestSpectrumCsv();
      if (csv !== null) {
        this.state.spectrum = minMaxDecimate(parseSpectrumCsv(csv));
      }
      if (this.control !== null) {
        this.state.plan = await this.control.getPlan();
        this.confirmPending();
      }
      this.state.connected = true;
      this.state.lastError = null;
      this.state.lastUpdateMs = this.now();
    } catch (err) {
      // an unreachable server marks the view stale; rendered data stays up
      this.state.connected = false;
      this.state.lastError = err instanceof Error ? err.message : String(err);
    } finally {
      this.inflight = false;
    }
    return true;
  }

  private confirmPending(): void {
    const pending = this.state.pendingControls;
    const plan = this.state.plan;
    if (!pending || pending.confirmed || !plan) {
      return;
    }
    const stillStaged = plan.pending !== null && plan.pending !== undefined;
    const applied = Object.entries(pending.changes).every(
      ([key, value]) => (plan as unknown as Record<string, number>)[key] === value,
    );
    if (!stillStaged && applied) {
      pending.confirmed = true;
    }
  }

  /** Start periodic polling; returns a cancel function. */
  start(intervalMs: number = DEFAULT_POLL_MS): () => void {
    void this.tick();
    const handle = setInterval(() => void this.tick(), intervalMs);
    return () => clearInterval(handle);
  }
}
