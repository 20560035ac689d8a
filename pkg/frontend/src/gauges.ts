/**
 * Lightweight canvas drawing: a tank gauge with the 50 m safety and 53 m
 * water-quality lines, and rolling strip charts.  No charting library.
 */

import type { SeriesPoint } from "./state.js";

export interface TankGaugeOptions {
  min: number;
  max: number;
  safety: number;
  quality: number;
}

export const TANK_GAUGE_DEFAULTS: TankGaugeOptions = {
  min: 47,
  max: 57,
  safety: 50,
  quality: 53,
};

export function drawTankGauge(
  canvas: HTMLCanvasElement,
  level: number | null,
  warn: boolean,
  opts: TankGaugeOptions = TANK_GAUGE_DEFAULTS,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);

  const pad = 24;
  const barX = width / 2 - 30;
  const barW = 60;
  const yFor = (value: number) =>
    height - pad - ((value - opts.min) / (opts.max - opts.min)) * (height - 2 * pad);

  ctx.strokeStyle = "#555";
  ctx.strokeRect(barX, pad, barW, height - 2 * pad);

  if (level !== null) {
    const top = yFor(Math.min(Math.max(level, opts.min), opts.max));
    ctx.fillStyle = warn ? "#c0392b" : "#2980b9";
    ctx.fillRect(barX + 1, top, barW - 2, height - pad - top);
  }

  const line = (value: number, color: string, label: string) => {
    const y = yFor(value);
    ctx.strokeStyle = color;
    ctx.beginPath();
    ctx.moveTo(barX - 14, y);
    ctx.lineTo(barX + barW + 14, y);
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.font = "10px sans-serif";
    ctx.fillText(label, barX + barW + 18, y + 3);
  };
  line(opts.safety, "#c0392b", `${opts.safety} m safety`);
  line(opts.quality, "#27ae60", `${opts.quality} m quality`);

  ctx.fillStyle = "#ddd";
  ctx.font = "12px sans-serif";
  ctx.fillText(`${opts.max} m`, 4, yFor(opts.max) + 4);
  ctx.fillText(`${opts.min} m`, 4, yFor(opts.min) + 4);
  if (level !== null) {
    ctx.font = "bold 14px sans-serif";
    ctx.fillText(`${level.toFixed(3)} m`, barX, pad - 8);
  }
}

export function drawSeries(
  canvas: HTMLCanvasElement,
  series: SeriesPoint[],
  pick: (p: SeriesPoint) => number,
  color: string,
  label: string,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#888";
  ctx.font = "10px sans-serif";
  ctx.fillText(label, 4, 12);
  if (series.length < 2) return;

  const values = series.map(pick);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  ctx.strokeStyle = color;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = (i / (series.length - 1)) * (width - 8) + 4;
    const y = height - 6 - ((v - lo) / span) * (height - 22);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillText(hi.toFixed(1), width - 40, 12);
  ctx.fillText(lo.toFixed(1), width - 40, height - 2);
}
