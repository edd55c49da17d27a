/**
 * The console's view of a session, derived purely from received messages.
 *
 * No client-side physics: every field is a fold over (hello, telemetry,
 * events). Reconnecting therefore rebuilds an equivalent view from the new
 * hello plus subsequent telemetry alone, which the truthProjection helper
 * makes testable.
 */

import type {
  Arena,
  ServerMessage,
  StartPose,
  StimIndicator,
  TargetPoint,
  TelemetryMessage,
} from "./protocol.js";

export const DEFAULT_TRACE_LIMIT = 2000;
export const STALE_AFTER_MS = 1000;

export type ConnectionState = "disconnected" | "connecting" | "connected";

export interface TracePoint {
  tick: number;
  x_mm: number;
  y_mm: number;
  heading_deg: number;
}

export interface StimFlash {
  action: string;
  source: string;
  atMs: number;
}

export interface SessionView {
  connection: ConnectionState;
  schemaVersion: number | null;
  arena: Arena | null;
  start: StartPose | null;
  target: TargetPoint | null;
  latest: TelemetryMessage | null;
  lastTelemetryAtMs: number | null;
  trace: TracePoint[];
  traceLimit: number;
  activeStim: StimIndicator | null;
  lastStimFlash: StimFlash | null;
  autopilot: boolean;
  paused: boolean;
  goalReached: boolean;
  lastError: string | null;
}

export function emptyView(traceLimit: number = DEFAULT_TRACE_LIMIT): SessionView {
  return {
    connection: "disconnected",
    schemaVersion: null,
    arena: null,
    start: null,
    target: null,
    latest: null,
    lastTelemetryAtMs: null,
    trace: [],
    traceLimit,
    activeStim: null,
    lastStimFlash: null,
    autopilot: false,
    paused: false,
    goalReached: false,
    lastError: null,
  };
}

export function setConnection(view: SessionView, state: ConnectionState): SessionView {
  if (state === "connected") {
    return { ...view, connection: state };
  }
  // a dropped socket invalidates everything derived from it except the trace
  // limit; the next hello rebuilds the view
  return { ...emptyView(view.traceLimit), connection: state };
}

export function applyMessage(
  view: SessionView,
  msg: ServerMessage,
  atMs: number,
): SessionView {
  switch (msg.type) {
    case "hello":
      return {
        ...view,
        schemaVersion: msg.version,
        arena: msg.arena,
        start: msg.start,
        target: msg.target,
        autopilot: msg.autopilot,
        paused: msg.paused,
        goalReached: msg.goal_reached,
        latest: null,
        trace: [],
        activeStim: null,
      };
    case "telemetry": {
      const point: TracePoint = {
        tick: msg.tick,
        x_mm: msg.x_mm,
        y_mm: msg.y_mm,
        heading_deg: msg.heading_deg,
      };
      const trace =
        view.trace.length >= view.traceLimit
          ? [...view.trace.slice(view.trace.length - view.traceLimit + 1), point]
          : [...view.trace, point];
      return {
        ...view,
        latest: msg,
        lastTelemetryAtMs: atMs,
        trace,
        activeStim: msg.stim,
      };
    }
    case "ack":
      return view;
    case "error":
      return { ...view, lastError: msg.message };
    case "event":
      return applyEvent(view, msg.kind, msg, atMs);
    default:
      return view;
  }
}

function applyEvent(
  view: SessionView,
  kind: string,
  msg: Record<string, unknown>,
  atMs: number,
): SessionView {
  switch (kind) {
    case "stim-applied":
      return {
        ...view,
        lastStimFlash: {
          action: String(msg["action"]),
          source: String(msg["source"]),
          atMs,
        },
      };
    case "goal-reached":
      return { ...view, goalReached: true, autopilot: false };
    case "target-set":
      return {
        ...view,
        target: { x_mm: Number(msg["x_mm"]), y_mm: Number(msg["y_mm"]) },
        goalReached: false,
      };
    case "autopilot":
      return { ...view, autopilot: Boolean(msg["on"]) };
    case "paused":
      return { ...view, paused: true };
    case "resumed":
      return { ...view, paused: false };
    case "reset":
      return { ...view, trace: [], latest: null, goalReached: false, activeStim: null };
    case "heartbeat":
    case "stim-rejected":
    default:
      return view;
  }
}

export function isStale(view: SessionView, nowMs: number): boolean {
  if (view.lastTelemetryAtMs === null) {
    return view.connection === "connected";
  }
  return nowMs - view.lastTelemetryAtMs > STALE_AFTER_MS;
}

/**
 * The simulation-truth projection of a view: everything that must survive a
 * reconnect. Trace history and wall-clock bookkeeping are excluded since a
 * fresh connection cannot know telemetry it never received.
 */
export interface TruthProjection {
  schemaVersion: number | null;
  arena: Arena | null;
  start: StartPose | null;
  target: TargetPoint | null;
  autopilot: boolean;
  paused: boolean;
  goalReached: boolean;
  latestTick: number | null;
  latestPose: { x_mm: number; y_mm: number; heading_deg: number } | null;
  activeStim: StimIndicator | null;
}

export function truthProjection(view: SessionView): TruthProjection {
  return {
    schemaVersion: view.schemaVersion,
    arena: view.arena,
    start: view.start,
    target: view.target,
    autopilot: view.autopilot,
    paused: view.paused,
    goalReached: view.goalReached,
    latestTick: view.latest ? view.latest.tick : null,
    latestPose: view.latest
      ? {
          x_mm: view.latest.x_mm,
          y_mm: view.latest.y_mm,
          heading_deg: view.latest.heading_deg,
        }
      : null,
    activeStim: view.activeStim,
  };
}
