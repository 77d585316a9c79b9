/** Defensive validation of incoming frames.
 *
 * The console never recomputes physics: every displayed number comes from
 * the frame. Validation therefore checks structure, finiteness, and two
 * cheap sanity invariants of the density matrix (unit trace, Hermitian
 * corner), and rejects anything else with a reason for the banner.
 */

import { SCHEMA_VERSION, WireFrame } from "./types.js";

export class SchemaMismatch extends Error {}

function fail(reason: string): never {
  throw new SchemaMismatch(reason);
}

function requireFiniteNumber(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    fail(`${name} must be a finite number`);
  }
  return value;
}

function requireNumberArray(value: unknown, length: number, name: string): number[] {
  if (!Array.isArray(value) || value.length !== length) {
    fail(`${name} must hold ${length} numbers`);
  }
  for (const entry of value) {
    if (typeof entry !== "number" || !Number.isFinite(entry)) {
      fail(`${name} must hold ${length} finite numbers`);
    }
  }
  return value as number[];
}

/** Real part of rho[i][j] inside the 32-real (re, im) layout. */
export function rhoRe(rho: number[], i: number, j: number): number {
  return rho[2 * (4 * i + j)] ?? 0;
}

/** Imaginary part of rho[i][j]. */
export function rhoIm(rho: number[], i: number, j: number): number {
  return rho[2 * (4 * i + j) + 1] ?? 0;
}

export function validateFrame(payload: unknown): WireFrame {
  if (typeof payload !== "object" || payload === null) {
    fail("frame payload must be an object");
  }
  const p = payload as Record<string, unknown>;
  if (p.type !== "frame") fail(`expected type "frame", got ${JSON.stringify(p.type)}`);
  if (p.v !== SCHEMA_VERSION) fail(`unsupported schema version ${JSON.stringify(p.v)}`);
  if (typeof p.seq !== "number" || !Number.isInteger(p.seq) || p.seq < 0) {
    fail("seq must be a nonnegative integer");
  }
  const rho = requireNumberArray(p.rho, 32, "rho");
  requireNumberArray(p.stokes, 16, "stokes");
  requireFiniteNumber(p.t, "t");
  requireFiniteNumber(p.fidelity, "fidelity");
  requireFiniteNumber(p.purity, "purity");
  requireFiniteNumber(p.concurrence, "concurrence");
  requireFiniteNumber(p.solve_ms, "solve_ms");
  if (typeof p.window_m !== "number" || !Number.isInteger(p.window_m) || p.window_m <= 0) {
    fail("window_m must be a positive integer");
  }
  const source = p.source as Record<string, unknown> | undefined;
  if (typeof source !== "object" || source === null) fail("source must be an object");
  requireFiniteNumber(source.theta, "source.theta");
  requireFiniteNumber(source.car, "source.car");
  requireFiniteNumber(source.rate, "source.rate");
  if (!Array.isArray(p.flags) || p.flags.some((f) => typeof f !== "string")) {
    fail("flags must be a list of strings");
  }

  const trace = rhoRe(rho, 0, 0) + rhoRe(rho, 1, 1) + rhoRe(rho, 2, 2) + rhoRe(rho, 3, 3);
  if (Math.abs(trace - 1) > 1e-6) fail(`rho trace ${trace.toFixed(6)} deviates from 1`);
  if (
    Math.abs(rhoRe(rho, 0, 1) - rhoRe(rho, 1, 0)) > 1e-6 ||
    Math.abs(rhoIm(rho, 0, 1) + rhoIm(rho, 1, 0)) > 1e-6
  ) {
    fail("rho is not Hermitian");
  }
  return payload as WireFrame;
}

/** Total service-side drops reported by a frame's flags (dropped=N). */
export function droppedCount(frame: WireFrame): number {
  let total = 0;
  for (const flag of frame.flags) {
    if (flag.startsWith("dropped=")) {
      const n = Number(flag.slice("dropped=".length));
      if (Number.isFinite(n)) total += n;
    }
  }
  return total;
}
