/**
 * Energy histories from the engine's report JSON.
 */
import * as fs from "node:fs";

export interface EnergyRow {
  step: number;
  time: number;
  field: number;
  kinetic: number;
  total: number;
}

export interface EnergyHistory {
  rows: EnergyRow[];
  /** |total(t) - total(0)| / total(0), per row */
  drift: number[];
  maxDrift: number;
}

export function readEnergyHistory(reportPath: string): EnergyHistory {
  const report = JSON.parse(fs.readFileSync(reportPath, "utf-8"));
  const raw: number[][] = report.energy_history;
  if (!Array.isArray(raw) || raw.length === 0) {
    throw new Error(`${reportPath}: no energy_history in report`);
  }
  const rows = raw.map((r) => ({
    step: r[0], time: r[1], field: r[2], kinetic: r[3], total: r[4],
  }));
  const t0 = rows[0].total;
  const drift = rows.map((r) => Math.abs(r.total - t0) / t0);
  return { rows, drift, maxDrift: Math.max(...drift) };
}
