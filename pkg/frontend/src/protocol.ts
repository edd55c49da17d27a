/**
 * Schema v1 of the live-bridge socket: one JSON message per WebSocket text
 * frame. These types mirror the server's documented schema exactly; the
 * console speaks nothing else.
 */

export const SCHEMA_VERSION = 1;

export interface Arena {
  x_min: number;
  x_max: number;
  y_min: number;
  y_max: number;
}

export interface StartPose {
  x_mm: number;
  y_mm: number;
  heading_deg: number;
}

export interface TargetPoint {
  x_mm: number;
  y_mm: number;
}

export interface HelloMessage {
  type: "hello";
  version: number;
  seed: number;
  tick: number;
  time_scale: number;
  arena: Arena;
  start: StartPose;
  target: TargetPoint | null;
  autopilot: boolean;
  paused: boolean;
  goal_reached: boolean;
}

export interface StimIndicator {
  class: string;
  source: string;
}

export interface TelemetryMessage {
  type: "telemetry";
  tick: number;
  t_ms: number;
  x_mm: number;
  y_mm: number;
  heading_deg: number;
  forward_velocity_mms: number;
  turning_velocity_dps: number;
  nav_state: number;
  stim: StimIndicator | null;
}

export interface AckMessage {
  type: "ack";
  seq: number | null;
}

export interface ErrorMessage {
  type: "error";
  message: string;
  seq: number | null;
}

export interface EventMessage {
  type: "event";
  kind: string;
  [key: string]: unknown;
}

export type ServerMessage =
  | HelloMessage
  | TelemetryMessage
  | AckMessage
  | ErrorMessage
  | EventMessage;

export type CommandAction =
  | "left"
  | "right"
  | "cerci"
  | "both-400"
  | "both-1200"
  | "set-target"
  | "autopilot-on"
  | "autopilot-off"
  | "pause"
  | "resume"
  | "reset";

export interface CommandMessage {
  type: "command";
  seq: number;
  action: CommandAction;
  x_mm?: number;
  y_mm?: number;
}

export function parseServerMessage(raw: string): ServerMessage {
  let value: unknown;
  try {
    value = JSON.parse(raw);
  } catch {
    throw new Error("server sent a frame that is not JSON");
  }
  if (typeof value !== "object" || value === null || !("type" in value)) {
    throw new Error("server message has no type field");
  }
  const msg = value as { type: unknown };
  switch (msg.type) {
    case "hello":
    case "telemetry":
    case "ack":
    case "error":
    case "event":
      return value as ServerMessage;
    default:
      throw new Error(`unknown server message type ${String(msg.type)}`);
  }
}
