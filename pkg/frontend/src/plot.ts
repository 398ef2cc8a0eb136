/**
 * Minimal batch SVG plotting: line plots (linear/log y) and heat maps.
 * No display server, no DOM; plain SVG strings written to disk.
 */
import * as fs from "node:fs";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color?: string;
  dashed?: boolean;
}

export interface LinePlotOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  logY?: boolean;
  width?: number;
  height?: number;
}

const MARGIN = { left: 64, right: 16, top: 28, bottom: 44 };
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = 10 ** Math.floor(Math.log10(span / n));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= n + 1) ?? 10 * step;
  const first = Math.ceil(lo / chosen) * chosen;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += chosen) ticks.push(v);
  return ticks;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(Math.round(v * 1e6) / 1e6);
}

export function linePlotSvg(series: Series[], opts: LinePlotOptions): string {
  const width = opts.width ?? 640;
  const height = opts.height ?? 420;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const xs = series.flatMap((s) => s.x);
  const ysRaw = series.flatMap((s) => s.y);
  const ys = opts.logY ? ysRaw.filter((v) => v > 0) : ysRaw;
  if (xs.length === 0 || ys.length === 0) {
    throw new Error("nothing to plot");
  }
  const x0 = Math.min(...xs);
  const x1 = Math.max(...xs);
  const yVal = (v: number) => (opts.logY ? Math.log10(v) : v);
  let y0 = Math.min(...ys.map(yVal));
  let y1 = Math.max(...ys.map(yVal));
  if (y0 === y1) { y0 -= 1; y1 += 1; }

  const px = (x: number) =>
    MARGIN.left + ((x - x0) / (x1 - x0 || 1)) * plotW;
  const py = (y: number) =>
    MARGIN.top + plotH - ((yVal(y) - y0) / (y1 - y0)) * plotH;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
             `height="${height}" font-family="sans-serif" font-size="12">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="16" text-anchor="middle" ` +
             `font-size="14">${opts.title}</text>`);

  for (const tx of niceTicks(x0, x1)) {
    const x = px(tx);
    parts.push(`<line x1="${x}" y1="${MARGIN.top}" x2="${x}" ` +
               `y2="${MARGIN.top + plotH}" stroke="#eee"/>`);
    parts.push(`<text x="${x}" y="${MARGIN.top + plotH + 16}" ` +
               `text-anchor="middle">${fmt(tx)}</text>`);
  }
  const yTicks = opts.logY
    ? Array.from({ length: Math.floor(y1) - Math.ceil(y0) + 1 },
                 (_, i) => Math.ceil(y0) + i)
    : niceTicks(y0, y1);
  for (const ty of yTicks) {
    const y = MARGIN.top + plotH - ((ty - y0) / (y1 - y0)) * plotH;
    const label = opts.logY ? `1e${ty}` : fmt(ty);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" ` +
               `x2="${MARGIN.left + plotW}" y2="${y}" stroke="#eee"/>`);
    parts.push(`<text x="${MARGIN.left - 6}" y="${y + 4}" ` +
               `text-anchor="end">${label}</text>`);
  }
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" ` +
             `height="${plotH}" fill="none" stroke="#333"/>`);

  series.forEach((s, si) => {
    const color = s.color ?? COLORS[si % COLORS.length];
    const pts: string[] = [];
    for (let i = 0; i < s.x.length; i++) {
      if (opts.logY && !(s.y[i] > 0)) continue;
      pts.push(`${px(s.x[i]).toFixed(1)},${py(s.y[i]).toFixed(1)}`);
    }
    const dash = s.dashed ? ' stroke-dasharray="6 4"' : "";
    parts.push(`<polyline points="${pts.join(" ")}" fill="none" ` +
               `stroke="${color}" stroke-width="1.5"${dash}/>`);
    parts.push(`<text x="${MARGIN.left + plotW - 8}" ` +
               `y="${MARGIN.top + 16 + 16 * si}" text-anchor="end" ` +
               `fill="${color}">${s.label}</text>`);
  });

  parts.push(`<text x="${MARGIN.left + plotW / 2}" y="${height - 8}" ` +
             `text-anchor="middle">${opts.xLabel}</text>`);
  parts.push(`<text x="16" y="${MARGIN.top + plotH / 2}" ` +
             `text-anchor="middle" transform="rotate(-90 16 ` +
             `${MARGIN.top + plotH / 2})">${opts.yLabel}</text>`);
  parts.push("</svg>");
  return parts.join("\n");
}

export interface HeatmapOptions {
  title: string;
  width?: number;
  height?: number;
}

/** Blue-white-red map of a row-major (nx, ny) field. */
export function heatmapSvg(values: Float64Array, nx: number, ny: number,
                           opts: HeatmapOptions): string {
  const width = opts.width ?? 560;
  const height = opts.height ?? 480;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  let vmax = 0;
  for (const v of values) vmax = Math.max(vmax, Math.abs(v));
  if (vmax === 0) vmax = 1;

  const cellW = plotW / nx;
  const cellH = plotH / ny;
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
             `height="${height}" font-family="sans-serif" font-size="12">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="16" text-anchor="middle" ` +
             `font-size="14">${opts.title} (|max| = ${vmax.toExponential(2)})` +
             `</text>`);
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      const t = values[i * ny + j] / vmax;  // -1 .. 1
      const r = t > 0 ? 255 : Math.round(255 * (1 + t));
      const b = t < 0 ? 255 : Math.round(255 * (1 - t));
      const g = Math.round(255 * (1 - Math.abs(t)));
      const x = MARGIN.left + i * cellW;
      const y = MARGIN.top + plotH - (j + 1) * cellH;
      parts.push(`<rect x="${x.toFixed(1)}" y="${y.toFixed(1)}" ` +
                 `width="${(cellW + 0.5).toFixed(1)}" ` +
                 `height="${(cellH + 0.5).toFixed(1)}" ` +
                 `fill="rgb(${r},${g},${b})"/>`);
    }
  }
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" ` +
             `height="${plotH}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="${MARGIN.left + plotW / 2}" y="${height - 8}" ` +
             `text-anchor="middle">x cell</text>`);
  parts.push(`<text x="16" y="${MARGIN.top + plotH / 2}" ` +
             `text-anchor="middle" transform="rotate(-90 16 ` +
             `${MARGIN.top + plotH / 2})">y cell</text>`);
  parts.push("</svg>");
  return parts.join("\n");
}

export function writeSvg(filePath: string, svg: string): void {
  fs.writeFileSync(filePath, svg, "utf-8");
}
