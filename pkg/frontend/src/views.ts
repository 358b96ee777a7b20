// Canvas renderers for the five instrument views. Pure painting: every
// value comes from a server AnalysisFrame. Rendering degrades to a no-op
// when a 2D context is unavailable (headless tests).

import type { AnalysisFrame, CcdfView, EyeView, PsdView } from "./types.js";

function context(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  try {
    return canvas.getContext ? canvas.getContext("2d") : null;
  } catch {
    return null;
  }
}

function clear(ctx: CanvasRenderingContext2D, w: number, h: number): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, w, h);
}

export function drawSpectrum(canvas: HTMLCanvasElement, psd: PsdView): void {
  const ctx = context(canvas);
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  clear(ctx, w, h);
  const lo = Math.min(...psd.power_db);
  const hi = Math.max(...psd.power_db);
  const span = Math.max(hi - lo, 1);
  ctx.strokeStyle = "#57b6ff";
  ctx.beginPath();
  psd.power_db.forEach((p, i) => {
    const x = (i / (psd.power_db.length - 1)) * w;
    const y = h - ((p - lo) / span) * (h - 8) - 4;
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
}

export function drawWaterfall(canvas: HTMLCanvasElement, rows: number[][]): void {
  const ctx = context(canvas);
  if (!ctx || rows.length === 0) return;
  const { width: w, height: h } = canvas;
  clear(ctx, w, h);
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of rows) {
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  const span = Math.max(hi - lo, 1);
  const rowH = h / rows.length;
  const colW = w / rows[0].length;
  rows.forEach((row, r) => {
    row.forEach((v, c) => {
      const t = (v - lo) / span;
      ctx.fillStyle = `hsl(${240 - 200 * t}, 90%, ${15 + 45 * t}%)`;
      ctx.fillRect(c * colW, r * rowH, colW + 1, rowH + 1);
    });
  });
}

export function drawConstellation(
  canvas: HTMLCanvasElement, points: number[][],
): void {
  const ctx = context(canvas);
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  clear(ctx, w, h);
  ctx.strokeStyle = "#2a3442";
  ctx.beginPath();
  ctx.moveTo(w / 2, 0);
  ctx.lineTo(w / 2, h);
  ctx.moveTo(0, h / 2);
  ctx.lineTo(w, h / 2);
  ctx.stroke();
  const radius = Math.max(1.5, w / 256);
  ctx.fillStyle = "#ffd166";
  const scale = w / 4.5; // +-2.25 full range covers QAM64 + noise
  for (const [re, im] of points) {
    ctx.beginPath();
    ctx.arc(w / 2 + re * scale, h / 2 - im * scale, radius, 0, 2 * Math.PI);
    ctx.fill();
  }
}

export function drawEye(canvas: HTMLCanvasElement, eye: EyeView): void {
  const ctx = context(canvas);
  if (!ctx || eye.traces.length === 0) return;
  const { width: w, height: h } = canvas;
  clear(ctx, w, h);
  let peak = 0;
  for (const trace of eye.traces) {
    for (const v of trace) peak = Math.max(peak, Math.abs(v));
  }
  peak = peak || 1;
  ctx.strokeStyle = "rgba(102, 255, 178, 0.35)";
  for (const trace of eye.traces) {
    ctx.beginPath();
    trace.forEach((v, i) => {
      const x = (i / (trace.length - 1)) * w;
      const y = h / 2 - (v / peak) * (h / 2 - 4);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}

export function drawCcdf(canvas: HTMLCanvasElement, ccdf: CcdfView): void {
  const ctx = context(canvas);
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  clear(ctx, w, h);
  const floor = 1e-6;
  ctx.strokeStyle = "#ff7b72";
  ctx.beginPath();
  ccdf.threshold_db.forEach((t, i) => {
    const p = Math.max(ccdf.prob_exceed[i], floor);
    const x = (t / Math.max(ccdf.threshold_db[ccdf.threshold_db.length - 1], 1)) * w;
    const y = (Math.log10(p) / Math.log10(floor)) * (h - 8) + 4;
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
}

export function renderFrame(
  frame: AnalysisFrame,
  waterfall: number[][],
  canvases: {
    spectrum: HTMLCanvasElement;
    waterfall: HTMLCanvasElement;
    constellation: HTMLCanvasElement;
    eye: HTMLCanvasElement;
    ccdf: HTMLCanvasElement;
  },
): void {
  drawSpectrum(canvases.spectrum, frame.psd);
  drawWaterfall(canvases.waterfall, waterfall);
  drawConstellation(canvases.constellation, frame.constellation);
  drawEye(canvases.eye, frame.eye);
  drawCcdf(canvases.ccdf, frame.ccdf);
}
