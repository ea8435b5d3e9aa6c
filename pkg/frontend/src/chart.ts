/** Canvas spectrum chart with a threshold overlay line. */

import type { SpectrumPoint } from "./types.js";

const FLOOR_DBM = -160;

export function drawSpectrum(
  canvas: HTMLCanvasElement,
  points: SpectrumPoint[],
  thresholdDbm: number | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  if (points.length < 2) {
    ctx.fillStyle = "#8899aa";
    ctx.fillText("no spectrum yet", 12, 20);
    return;
  }
  const fMin = points[0].freqHz;
  const fMax = points[points.length - 1].freqHz;
  let pMax = -Infinity;
  for (const p of points) {
    if (p.powerDbm > pMax) pMax = p.powerDbm;
  }
  const top = Math.min(Math.ceil((pMax + 10) / 10) * 10, 20);
  const bottom = FLOOR_DBM;
  const x = (f: number) => ((f - fMin) / (fMax - fMin)) * (width - 50) + 45;
  const y = (p: number) => {
    const clamped = Math.max(Math.min(p, top), bottom);
    return height - 18 - ((clamped - bottom) / (top - bottom)) * (height - 30);
  };

  ctx.strokeStyle = "#335";
  ctx.fillStyle = "#8899aa";
  ctx.font = "10px monospace";
  for (let grid = bottom; grid <= top; grid += 20) {
    ctx.beginPath();
    ctx.moveTo(45, y(grid));
    ctx.lineTo(width - 5, y(grid));
    ctx.stroke();
    ctx.fillText(`${grid}`, 4, y(grid) + 3);
  }
  ctx.fillText(`${(fMin / 1e6).toFixed(1)} MHz`, 45, height - 4);
  ctx.fillText(`${(fMax / 1e6).toFixed(1)} MHz`, width - 80, height - 4);

  ctx.strokeStyle = "#4fd1c5";
  ctx.beginPath();
  let started = false;
  for (const p of points) {
    const px = x(p.freqHz);
    const py = y(p.powerDbm);
    if (!started) {
      ctx.moveTo(px, py);
      started = true;
    } else {
      ctx.lineTo(px, py);
    }
  }
  ctx.stroke();

  if (thresholdDbm !== null && thresholdDbm >= bottom && thresholdDbm <= top) {
    ctx.strokeStyle = "#f56565";
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(45, y(thresholdDbm));
    ctx.lineTo(width - 5, y(thresholdDbm));
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = "#f56565";
    ctx.fillText(`threshold ${thresholdDbm} dBm`, 50, y(thresholdDbm) - 4);
  }
}
