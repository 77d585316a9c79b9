import { WireFrame } from "../src/types.js";

/** Maximally mixed state: a legal rho for fixtures. */
export function mixedRho(): number[] {
  const rho = new Array<number>(32).fill(0);
  for (let i = 0; i < 4; i++) rho[2 * (4 * i + i)] = 0.25;
  return rho;
}

export function makeFrame(seq: number, over: Partial<WireFrame> = {}): WireFrame {
  return {
    type: "frame",
    v: 1,
    seq,
    t: seq * 0.1,
    rho: mixedRho(),
    stokes: [1, ...new Array<number>(15).fill(0)],
    fidelity: 0.95,
    purity: 0.9,
    concurrence: 0.5,
    window_m: 9,
    solve_ms: 0.4,
    source: { theta: 0, car: 3, rate: 1e6 },
    flags: [],
    ...over,
  };
}
