/** Control-form validation and submission ("applies next sweep"). */

import type { ControlApi } from "./api.js";
import type { ConsoleState } from "./types.js";

export const THRESHOLD_MIN_DBM = -120;
export const THRESHOLD_MAX_DBM = 0;

/** Returns an error message, or null when the value is acceptable. */
export function validateThreshold(value: number): string | null {
  if (!Number.isFinite(value)) {
    return "threshold must be a number";
  }
  if (value < THRESHOLD_MIN_DBM || value > THRESHOLD_MAX_DBM) {
    return `threshold must be within [${THRESHOLD_MIN_DBM}, ${THRESHOLD_MAX_DBM}] dBm`;
  }
  return null;
}

export function validatePositiveHz(value: number, name: string): string | null {
  if (!Number.isFinite(value) || value <= 0) {
    return `${name} must be a positive frequency in Hz`;
  }
  return null;
}

export function validateChanges(changes: Record<string, number>): string | null {
  if (Object.keys(changes).length === 0) {
    return "no changes to apply";
  }
  for (const [key, value] of Object.entries(changes)) {
    if (key === "threshold_dbm") {
      const err = validateThreshold(value);
      if (err) return err;
    } else if (key === "span_hz" || key === "step_hz") {
      const err = validatePositiveHz(value, key);
      if (err) return err;
    } else {
      return `unknown control field ${key}`;
    }
  }
  return null;
}

/**
 * Validate client-side, POST to the control endpoint and mark the change
 * pending; the poller flips it to confirmed once GET /plan reflects it.
 * Returns an inline error message on rejection, null on success.
 */
export async function applyControls(
  control: ControlApi,
  state: ConsoleState,
  changes: Record<string, number>,
  now: () => number = Date.now,
): Promise<string | null> {
  const invalid = validateChanges(changes);
  if (invalid) {
    return invalid;
  }
  try {
    await control.setPlan(changes);
  } catch (err) {
    return err instanceof Error ? err.message : String(err);
  }
  state.pendingControls = { changes, submittedAtMs: now(), confirmed: false };
  return null;
}
