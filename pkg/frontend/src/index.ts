export * from "./picb.js";
export * from "./dispersion.js";
export * from "./growth.js";
export * from "./energy.js";
export * from "./plot.js";
export { analyzeRun } from "./analyze.js";
