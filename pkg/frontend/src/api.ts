/** HTTP clients for the remote store and the scan control endpoint.
 *
 * The console only ever reads from the store; the single write path is the
 * control endpoint (plan changes, start/stop).  fetch is injectable so the
 * poll loop is fully testable without a network.
 */

import type { EventRecord, PlanView } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class RemoteApi {
  constructor(
    private baseUrl: string,
    private token: string | null = null,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private headers(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  async getEvents(sinceMs: number | null = null): Promise<EventRecord[]> {
    const query = sinceMs === null ? "" : `?since=${sinceMs}`;
    const resp = await this.fetchImpl(`${this.baseUrl}/events${query}`, {
      headers: this.headers(),
    });
    if (!resp.ok) {
      throw new Error(`GET /events failed: ${resp.status}`);
    }
    return (await resp.json()) as EventRecord[];
  }

  /** Latest stitched spectrum CSV, or null when none has been uploaded. */
  async getLatestSpectrumCsv(): Promise<string | null> {
    const resp = await this.fetchImpl(`${this.baseUrl}/spectrum/latest`, {
      headers: this.headers(),
    });
    if (resp.status === 404) {
      return null;
    }
    if (!resp.ok) {
      throw new Error(`GET /spectrum/latest failed: ${resp.status}`);
    }
    return await resp.text();
  }

  artifactUrl(eventId: string, filename: string): string {
    return `${this.baseUrl}/artifacts/${eventId}/${filename}`;
  }
}

export class ControlApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  async getPlan(): Promise<PlanView> {
    const resp = await this.fetchImpl(`${this.baseUrl}/plan`);
    if (!resp.ok) {
      throw new Error(`GET /plan failed: ${resp.status}`);
    }
    return (await resp.json()) as PlanView;
  }

  async setPlan(changes: Record<string, number>): Promise<void> {
    const resp = await this.fetchImpl(`${this.baseUrl}/plan`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(changes),
    });
    if (!resp.ok) {
      const body = (await resp.json().catch(() => ({ error: "rejected" }))) as {
        error?: string;
      };
      throw new Error(body.error ?? `POST /plan failed: ${resp.status}`);
    }
  }

  async stop(): Promise<void> {
    const resp = await this.fetchImpl(`${this.baseUrl}/stop`, { method: "POST" });
    if (!resp.ok) {
      throw new Error(`POST /stop failed: ${resp.status}`);
    }
  }

  async start(): Promise<void> {
    const resp = await this.fetchImpl(`${this.baseUrl}/start`, { method: "POST" });
    if (!resp.ok) {
      throw new Error(`POST /start failed: ${resp.status}`);
    }
  }
}
