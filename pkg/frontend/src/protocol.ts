// Frame grammar shared with the engine: one JSON object per line, with a
// fixed `type` set. Unknown fields are ignored; unknown types are surfaced
// to the caller as null so the console can keep running.

export const FRAME_TYPES = [
  "hello", "ecg", "effort", "cmd", "state", "ack", "error",
] as const;

export type FrameType = (typeof FRAME_TYPES)[number];

export interface NpcView {
  offset_m: number;
  aligned: boolean;
  score: number;
}

export interface BikeView {
  hr_bpm: number | null;
  current_zone: number | null;
  target_zone: number;
}

export interface StateFrame {
  type: "state";
  t_s: number;
  phase: "training" | "running" | "finished";
  hr_bpm: number | null;
  hr_norm: number | null;
  current_zone: number | null;
  target_zone: number;
  remaining_s: number;
  condition: "baseline" | "random" | "adaptive";
  npc: NpcView | null;
  bike_view: BikeView | null;
  speed_mps: number;
  end_prompt: boolean;
  wall_t?: number;
  dropped?: number;
}

export interface SessionConfigView {
  participant_id: string;
  age: number;
  condition: string;
  hr_max_bpm: number;
  zone_boundaries: number[];
  green_radius_m: number;
  max_offset_m: number;
  p_max_w: number;
  tick_hz: number;
  training_s: number;
  zone_schedule: [number, number][];
}

export interface AckFrame {
  type: "ack";
  ack: string;
  config?: SessionConfigView;
  power_w?: number;
  clamped?: boolean;
  [key: string]: unknown;
}

export interface ErrorFrame {
  type: "error";
  code: string;
  message: string;
}

export type Frame = StateFrame | AckFrame | ErrorFrame | {
  type: FrameType;
  [key: string]: unknown;
};

/** Parse one wire line; returns null for anything outside the grammar. */
export function parseFrame(line: string): Frame | null {
  let value: unknown;
  try {
    value = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    return null;
  }
  const frame = value as { type?: unknown };
  if (typeof frame.type !== "string" ||
      !(FRAME_TYPES as readonly string[]).includes(frame.type)) {
    return null;
  }
  return frame as Frame;
}

export function serializeFrame(frame: Frame): string {
  return JSON.stringify(frame);
}

export function helloFrame(role: "console" | "observer" | "sensor"): Frame {
  return { type: "hello", role };
}

export function effortFrame(powerW: number): Frame {
  return { type: "effort", power_w: powerW };
}

export function cmdFrame(cmd: string, args: Record<string, unknown> = {}): Frame {
  return { type: "cmd", cmd, ...args };
}

export function isState(frame: Frame): frame is StateFrame {
  return frame.type === "state";
}

export function isAck(frame: Frame): frame is AckFrame {
  return frame.type === "ack";
}

export function isError(frame: Frame): frame is ErrorFrame {
  return frame.type === "error";
}
