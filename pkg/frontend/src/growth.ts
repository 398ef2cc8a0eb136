/**
 * Mode-amplitude histories and growth-rate fitting.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { GridData, readFileset, xProfile } from "./picb.js";

export interface ModePoint {
  step: number;
  time: number;
  amplitude: number;
}

/** |DFT_m| of the y/z-averaged x-profile of one component. */
export function modeAmplitude(grid: GridData, mode: number,
                              componentIndex = 0): number {
  const profile = xProfile(grid, componentIndex);
  const n = profile.length;
  let re = 0;
  let im = 0;
  for (let i = 0; i < n; i++) {
    const phase = (-2 * Math.PI * mode * i) / n;
    re += profile[i] * Math.cos(phase);
    im += profile[i] * Math.sin(phase);
  }
  return Math.hypot(re, im) / n;
}

/** All index sidecars of one quantity in a run directory, step order. */
export function filesetSeries(dir: string, quantity = "E"): string[] {
  const names = fs.readdirSync(dir)
    .filter((f) => f.startsWith(`${quantity}_step`) &&
                   f.endsWith(".index.json"))
    .sort();
  return names.map((f) => path.join(dir, f));
}

export function modeHistory(dir: string, mode: number, quantity = "E",
                            componentIndex = 0): ModePoint[] {
  return filesetSeries(dir, quantity).map((indexPath) => {
    const data = readFileset(indexPath);
    if (data.kind !== "grid") {
      throw new Error(`${indexPath}: expected a grid fileset`);
    }
    return { step: data.step, time: data.time,
             amplitude: modeAmplitude(data, mode, componentIndex) };
  });
}

export interface GrowthFit {
  rate: number;
  intercept: number;
  /** inclusive sample range used by the fit */
  windowStart: number;
  windowEnd: number;
  nPoints: number;
}

/**
 * Least-squares growth rate of log(amplitude).
 *
 * The window is selected automatically: the last contiguous rise into
 * the peak, between 2% and 50% of the peak amplitude. That skips the
 * early multi-branch transient (which crosses the thresholds and falls
 * back) and stops before trapping saturates the mode.
 */
export function fitGrowthRate(history: ModePoint[]): GrowthFit {
  if (history.length < 4) {
    throw new Error(`need at least 4 samples, got ${history.length}`);
  }
  const amps = history.map((p) => p.amplitude);
  let ipeak = 0;
  amps.forEach((a, i) => { if (a > amps[ipeak]) ipeak = i; });
  const peak = amps[ipeak];
  if (peak <= 0) throw new Error("mode amplitude never rose above zero");

  let hi = ipeak;
  for (let i = ipeak; i >= 0; i--) {
    if (amps[i] <= 0.5 * peak) { hi = i; break; }
  }
  let lo = 0;
  for (let i = hi; i >= 0; i--) {
    if (amps[i] <= 0.02 * peak) { lo = i; break; }
  }
  if (hi - lo + 1 < 3) {
    throw new Error("growth window too short to fit");
  }

  let st = 0, sy = 0, stt = 0, sty = 0;
  const n = hi - lo + 1;
  for (let i = lo; i <= hi; i++) {
    const t = history[i].time;
    const y = Math.log(amps[i]);
    st += t; sy += y; stt += t * t; sty += t * y;
  }
  const rate = (n * sty - st * sy) / (n * stt - st * st);
  const intercept = (sy - rate * st) / n;
  return { rate, intercept, windowStart: lo, windowEnd: hi, nPoints: n };
}
