import { describe, expect, it } from "vitest";

import { BeamParams, cutoffWavenumber, driftGamma, driftVelocity,
         fastestMode, growthRate } from "../src/dispersion.js";

const BENCH: BeamParams = { p0: 0.05, mass: 1, density: 1, charge: -1 };

describe("two-beam dispersion oracle", () => {
  it("is stable without drift", () => {
    const beam = { ...BENCH, p0: 0 };
    for (const k of [0.1, 1, 10, 100]) {
      expect(growthRate(beam, k)).toBe(0);
    }
  });

  it("is stable at large wavenumber", () => {
    const kc = cutoffWavenumber(BENCH);
    expect(growthRate(BENCH, kc * 1.0001)).toBe(0);
    expect(growthRate(BENCH, kc * 10)).toBe(0);
    expect(growthRate(BENCH, kc * 0.999)).toBeGreaterThan(0);
  });

  it("matches the frozen benchmark value", () => {
    // k of the seeded mode in the golden run: 2 pi / 0.5
    const k = 4 * Math.PI;
    expect(growthRate(BENCH, k)).toBeCloseTo(0.35260735170450336, 12);
  });

  it("peaks at a = 3b/8 with rate wp/(sqrt(8) gamma0^{3/2})", () => {
    const { k, rate } = fastestMode(BENCH);
    expect(rate).toBeCloseTo(0.3528919247918155, 12);
    // numeric scan around the analytic peak
    let best = 0;
    let bestK = 0;
    for (let kk = 0.5 * k; kk < 1.5 * k; kk += k / 2000) {
      const g = growthRate(BENCH, kk);
      if (g > best) { best = g; bestK = kk; }
    }
    expect(best).toBeLessThanOrEqual(rate + 1e-12);
    expect(bestK).toBeCloseTo(k, 2);
    expect(best).toBeCloseTo(rate, 6);
  });

  it("non-relativistic drift velocity and gamma", () => {
    expect(driftVelocity(BENCH)).toBeCloseTo(0.05 / Math.sqrt(1.0025), 14);
    expect(driftGamma(BENCH)).toBeCloseTo(Math.sqrt(1.0025), 14);
  });
});
