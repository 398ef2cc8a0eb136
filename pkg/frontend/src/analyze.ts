/**
 * Batch analysis of one run directory:
 *
 *   node dist/analyze.js <rundir> --out <outdir> [--mode M] [--p0 P]
 *        [--density D] [--mass M] [--charge Q] [--report report.json]
 *
 * Produces energy.svg, mode_history.svg (log scale with the fitted
 * line), density_slice.svg when a density fileset exists, and
 * summary.json with the fitted and theoretical growth rates.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { growthRate, fastestMode, BeamParams } from "./dispersion.js";
import { readEnergyHistory } from "./energy.js";
import { fitGrowthRate, filesetSeries, modeHistory } from "./growth.js";
import { readFileset, readIndex, xySlice } from "./picb.js";
import { heatmapSvg, linePlotSvg, writeSvg } from "./plot.js";

interface Args {
  runDir: string;
  outDir: string;
  mode: number;
  beam: BeamParams;
  reportPath: string | null;
}

function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (argv[i].startsWith("--")) {
      flags.set(argv[i].slice(2), argv[++i]);
    } else {
      positional.push(argv[i]);
    }
  }
  if (positional.length !== 1) {
    throw new Error("usage: analyze <rundir> --out <outdir> [--mode M] " +
                    "[--p0 P] [--density D] [--mass M] [--charge Q]");
  }
  const runDir = positional[0];
  return {
    runDir,
    outDir: flags.get("out") ?? path.join(runDir, "analysis"),
    mode: Number(flags.get("mode") ?? "1"),
    beam: {
      p0: Number(flags.get("p0") ?? "0"),
      mass: Number(flags.get("mass") ?? "1"),
      density: Number(flags.get("density") ?? "1"),
      charge: Number(flags.get("charge") ?? "-1"),
    },
    reportPath: flags.get("report") ??
      (fs.existsSync(path.join(runDir, "report.json"))
        ? path.join(runDir, "report.json") : null),
  };
}

export function analyzeRun(args: Args): Record<string, unknown> {
  fs.mkdirSync(args.outDir, { recursive: true });
  const summary: Record<string, unknown> = { run_dir: args.runDir };

  // energy history
  if (args.reportPath !== null) {
    const energy = readEnergyHistory(args.reportPath);
    const t = energy.rows.map((r) => r.time);
    writeSvg(path.join(args.outDir, "energy.svg"), linePlotSvg(
      [
        { label: "field", x: t, y: energy.rows.map((r) => r.field) },
        { label: "kinetic", x: t, y: energy.rows.map((r) => r.kinetic) },
        { label: "total", x: t, y: energy.rows.map((r) => r.total) },
      ],
      { title: "energy history", xLabel: "t", yLabel: "energy" }));
    summary.energy = {
      rows: energy.rows.length,
      max_total_drift: energy.maxDrift,
      final_field: energy.rows[energy.rows.length - 1].field,
    };
  }

  // mode-amplitude history and growth fit
  if (filesetSeries(args.runDir, "E").length >= 4) {
    const history = modeHistory(args.runDir, args.mode, "E", 0);
    const fit = fitGrowthRate(history);
    const t = history.map((p) => p.time);
    const fitLine = t.map((tt) => Math.exp(fit.intercept + fit.rate * tt));
    writeSvg(path.join(args.outDir, "mode_history.svg"), linePlotSvg(
      [
        { label: `|E_x(k_${args.mode})|`, x: t,
          y: history.map((p) => p.amplitude) },
        { label: `fit rate ${fit.rate.toFixed(4)}`, x: t, y: fitLine,
          dashed: true },
      ],
      { title: `mode ${args.mode} amplitude`, xLabel: "t",
        yLabel: "|E_k|", logY: true }));
    summary.growth = {
      mode: args.mode,
      gamma_fit: fit.rate,
      window_points: fit.nPoints,
      samples: history.length,
    };
    if (args.beam.p0 > 0) {
      // wavenumber of the seeded mode needs the box, taken from config
      // echo in the first index sidecar
      const index = readIndex(filesetSeries(args.runDir, "E")[0]);
      const cfg = (index as unknown as {
        config?: { config?: { box_size?: number[] } };
      }).config?.config;
      if (cfg?.box_size) {
        const k = (2 * Math.PI * args.mode) / cfg.box_size[0];
        const theory = growthRate(args.beam, k);
        summary.growth = {
          ...(summary.growth as object),
          k,
          gamma_theory: theory,
          fit_over_theory: theory > 0 ? fit.rate / theory : null,
          fastest: fastestMode(args.beam),
        };
      }
    }
  }

  // density slice
  const densitySeries = fs.readdirSync(args.runDir)
    .filter((f) => f.startsWith("density") && f.endsWith(".index.json"))
    .sort();
  if (densitySeries.length > 0) {
    const last = path.join(args.runDir, densitySeries[densitySeries.length - 1]);
    const dens = readFileset(last);
    if (dens.kind === "grid") {
      const slice = xySlice(dens, 0, Math.floor(dens.shape[2] / 2));
      writeSvg(path.join(args.outDir, "density_slice.svg"),
               heatmapSvg(slice.values, slice.nx, slice.ny,
                          { title: `density slice, step ${dens.step}` }));
      summary.density_slice = { from: densitySeries.at(-1), step: dens.step };
    }
  }

  fs.writeFileSync(path.join(args.outDir, "summary.json"),
                   JSON.stringify(summary, null, 2));
  return summary;
}

const isMain = process.argv[1] !== undefined &&
  path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (isMain) {
  const summary = analyzeRun(parseArgs(process.argv.slice(2)));
  console.log(JSON.stringify(summary, null, 2));
}
