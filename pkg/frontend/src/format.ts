/** Value formatting: frequencies in MHz and powers in dBm, 3 decimals each. */

export function formatMHz(freqHz: number): string {
  return `${(freqHz / 1e6).toFixed(3)} MHz`;
}

export function formatDbm(powerDbm: number): string {
  if (powerDbm === Number.NEGATIVE_INFINITY) {
    return "-inf dBm";
  }
  return `${powerDbm.toFixed(3)} dBm`;
}

export function formatTimestamp(unixMs: number): string {
  return new Date(unixMs).toISOString().replace("T", " ").replace("Z", " UTC");
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
