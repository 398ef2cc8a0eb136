/**
 * Cold symmetric two-beam dispersion oracle.
 *
 * Two counter-streaming cold beams (total density n, drift momentum
 * +/- p0 along the wave vector) obey
 *
 *   1 = (wp^2 / 2 gamma0^3) [ (w - k v0)^-2 + (w + k v0)^-2 ]
 *
 * in normalized units (wp^2 = q^2 n / m). Substituting u = w^2 gives a
 * quadratic with roots u = [(2a+b) +- sqrt(b(b+8a))]/2 where
 * a = (k v0)^2 and b = wp^2/gamma0^3; the mode is unstable iff a < b,
 * with growth rate sqrt(-u_minus). The fastest-growing wavenumber sits
 * at a = 3b/8 with peak rate wp gamma0^(-3/2) / (2 sqrt(2)).
 */

export interface BeamParams {
  /** drift momentum magnitude, units of m c */
  p0: number;
  /** particle mass, units of electron mass */
  mass: number;
  /** total number density of both beams, reference units */
  density: number;
  /** charge in units of e (sign irrelevant, enters squared) */
  charge: number;
}

export function driftVelocity(p: BeamParams): number {
  return p.p0 / Math.sqrt(p.mass * p.mass + p.p0 * p.p0);
}

export function driftGamma(p: BeamParams): number {
  return Math.sqrt(1.0 + (p.p0 / p.mass) ** 2);
}

export function plasmaFrequencySquared(p: BeamParams): number {
  return (p.charge * p.charge * p.density) / p.mass;
}

/** Growth rate of the mode with wavenumber k; 0 when stable. */
export function growthRate(p: BeamParams, k: number): number {
  const v0 = driftVelocity(p);
  const a = (k * v0) ** 2;
  const b = plasmaFrequencySquared(p) / driftGamma(p) ** 3;
  if (a >= b || a === 0.0) return 0.0;
  const uMinus = (2 * a + b - Math.sqrt(b * (b + 8 * a))) / 2;
  return uMinus < 0 ? Math.sqrt(-uMinus) : 0.0;
}

/** Wavenumber and rate of the fastest-growing mode. */
export function fastestMode(p: BeamParams): { k: number; rate: number } {
  const v0 = driftVelocity(p);
  const b = plasmaFrequencySquared(p) / driftGamma(p) ** 3;
  if (v0 === 0.0) return { k: 0, rate: 0 };
  const k = Math.sqrt((3 * b) / 8) / v0;
  return { k, rate: Math.sqrt(b / 8) };
}

/** Largest unstable wavenumber (modes with k >= cutoff oscillate). */
export function cutoffWavenumber(p: BeamParams): number {
  const v0 = driftVelocity(p);
  if (v0 === 0.0) return 0;
  const b = plasmaFrequencySquared(p) / driftGamma(p) ** 3;
  return Math.sqrt(b) / v0;
}
