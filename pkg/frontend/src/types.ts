/** Shared shapes for the console: server events, plan state, view state. */

export interface EventRecord {
  event_id: string;
  t0_unix_ms: number;
  peak_freq_hz: number;
  peak_power_dbm: number;
  threshold_dbm?: number;
  sweep_id?: string;
  window_index?: number;
  artifacts: string[];
}

export interface PlanView {
  threshold_dbm: number;
  span_hz: number;
  step_hz: number;
  f_start_hz: number;
  f_stop_hz: number;
  dwell_s: number;
  n_fft: number;
  running: boolean;
  alarm: string | null;
  pending: Record<string, number> | null;
}

export interface SpectrumPoint {
  freqHz: number;
  powerDbm: number;
}

export interface PendingChange {
  changes: Record<string, number>;
  submittedAtMs: number;
  confirmed: boolean;
}

/** Everything the view renders; mutated only by the poller and controls. */
export interface ConsoleState {
  events: EventRecord[]; // newest first
  spectrum: SpectrumPoint[]; // decimated, frequency-ascending
  plan: PlanView | null;
  connected: boolean;
  lastUpdateMs: number | null;
  lastError: string | null;
  pendingControls: PendingChange | null;
}

export function initialState(): ConsoleState {
  return {
    events: [],
    spectrum: [],
    plan: null,
    connected: false,
    lastUpdateMs: null,
    lastError: null,
    pendingControls: null,
  };
}
