/** Min/max decimation so the spectrum chart never paints more than ~4k points. */

import type { SpectrumPoint } from "./types.js";

export const MAX_CHART_POINTS = 4096;

/**
 * Reduce a frequency-sorted trace to at most maxPoints while preserving
 * peaks: each bucket contributes its minimum and maximum sample in
 * frequency order, so narrow spikes survive the downsampling.
 */
export function minMaxDecimate(
  points: SpectrumPoint[],
  maxPoints: number = MAX_CHART_POINTS,
): SpectrumPoint[] {
  if (maxPoints < 2) {
    throw new Error("maxPoints must be >= 2");
  }
  if (points.length <= maxPoints) {
    return points;
  }
  const buckets = Math.floor(maxPoints / 2);
  const out: SpectrumPoint[] = [];
  const perBucket = points.length / buckets;
  for (let b = 0; b < buckets; b++) {
    const start = Math.floor(b * perBucket);
    const end = Math.min(points.length, Math.floor((b + 1) * perBucket));
    if (start >= end) {
      continue;
    }
    let lo = points[start];
    let hi = points[start];
    for (let i = start + 1; i < end; i++) {
      const p = points[i];
      if (p.powerDbm < lo.powerDbm) lo = p;
      if (p.powerDbm > hi.powerDbm) hi = p;
    }
    if (lo === hi) {
      out.push(lo);
    } else if (lo.freqHz <= hi.freqHz) {
      out.push(lo, hi);
    } else {
      out.push(hi, lo);
    }
  }
  return out;
}

/** Parse the server's freq_hz,power_dbm CSV ("-inf" becomes -Infinity). */
export function parseSpectrumCsv(text: string): SpectrumPoint[] {
  const lines = text.trim().split("\n");
  const points: SpectrumPoint[] = [];
  for (let i = 1; i < lines.length; i++) {
    const [freq, power] = lines[i].split(",");
    if (freq === undefined || power === undefined) {
      continue;
    }
    points.push({
      freqHz: Number(freq),
      powerDbm: power.trim() === "-inf" ? Number.NEGATIVE_INFINITY : Number(power),
    });
  }
  return points;
}
