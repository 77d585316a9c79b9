/** Message shapes of the polarimeter wire protocol (schema v1). */

export const SCHEMA_VERSION = 1;

export interface WireSource {
  theta: number;
  car: number;
  rate: number;
}

export interface WireFrame {
  type: "frame";
  v: number;
  seq: number;
  t: number;
  rho: number[]; // 32 reals: row-major (re, im) pairs over {HH, HV, VH, VV}
  stokes: number[]; // 16 reals
  fidelity: number;
  purity: number;
  concurrence: number;
  window_m: number;
  solve_ms: number;
  source: WireSource;
  flags: string[];
}

export interface WireAck {
  type: "ack";
  req_id: string | null;
  applied_seq?: number;
  error?: string;
}

export interface WireHello {
  type: "hello";
  v: number;
  settings: string[];
  commands: string[];
  targets: string[];
  config: {
    window_m: number;
    pacing: string;
    tau_m: number;
    tau_s: number;
    seed: number;
    source: { theta: number; car: number; rate: number; depolarization: number };
  };
}

export type ServerMessage = WireFrame | WireAck | WireHello;

export type CommandName =
  | "set_theta"
  | "set_car"
  | "set_rate"
  | "set_window"
  | "pause"
  | "resume"
  | "set_target";

export interface WireCommand {
  cmd: CommandName;
  value?: number | string | null;
  req_id: string;
}
