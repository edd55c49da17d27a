/**
 * Immediate-mode arena rendering. World coordinates are millimeters with y
 * up and headings counter-clockwise positive; the canvas has y down, so the
 * transform flips y and the triangle vertices are computed in world space
 * (heading 90 degrees renders the nose pointing up-left of the screen's
 * x axis, i.e. rotated 90 degrees counter-clockwise).
 *
 * The renderer draws through a minimal 2D-context interface so tests can
 * substitute a recording stub; on a real page it is the canvas context.
 */

import type { SessionView } from "./viewModel.js";
import { isStale } from "./viewModel.js";

/** Subset of CanvasRenderingContext2D the renderer uses. */
export interface Draw2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export interface WorldTransform {
  toScreen(x_mm: number, y_mm: number): [number, number];
  scale: number;
}

export function makeTransform(
  arena: { x_min: number; x_max: number; y_min: number; y_max: number },
  viewport: Viewport,
): WorldTransform {
  const spanX = arena.x_max - arena.x_min;
  const spanY = arena.y_max - arena.y_min;
  const scale = Math.min(
    (viewport.width - 2 * viewport.margin) / spanX,
    (viewport.height - 2 * viewport.margin) / spanY,
  );
  const toScreen = (x_mm: number, y_mm: number): [number, number] => [
    viewport.margin + (x_mm - arena.x_min) * scale,
    viewport.height - viewport.margin - (y_mm - arena.y_min) * scale,
  ];
  return { toScreen, scale };
}

/** Agent triangle vertices in world mm: nose along the heading. */
export function agentTriangle(
  x_mm: number,
  y_mm: number,
  heading_deg: number,
  size_mm: number,
): Array<[number, number]> {
  const h = (heading_deg * Math.PI) / 180;
  const nose: [number, number] = [
    x_mm + size_mm * Math.cos(h),
    y_mm + size_mm * Math.sin(h),
  ];
  const left: [number, number] = [
    x_mm + 0.6 * size_mm * Math.cos(h + (2.5 * Math.PI) / 3),
    y_mm + 0.6 * size_mm * Math.sin(h + (2.5 * Math.PI) / 3),
  ];
  const right: [number, number] = [
    x_mm + 0.6 * size_mm * Math.cos(h - (2.5 * Math.PI) / 3),
    y_mm + 0.6 * size_mm * Math.sin(h - (2.5 * Math.PI) / 3),
  ];
  return [nose, left, right];
}

const COLORS = {
  background: "#101418",
  arena: "#2c3440",
  trace: "#4aa3ff",
  agent: "#ffd166",
  start: "#3ddc84",
  target: "#ff5964",
  targetReached: "#3ddc84",
  banner: "#e8e8e8",
  stale: "#ffb020",
};

const STIM_FLASH_MS = 600;

export function renderArena(
  ctx: Draw2D,
  view: SessionView,
  viewport: Viewport,
  nowMs: number,
): void {
  ctx.globalAlpha = 1;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, viewport.width, viewport.height);
  if (view.arena === null) {
    ctx.fillStyle = COLORS.banner;
    ctx.font = "14px monospace";
    ctx.fillText("waiting for session hello…", 16, 24);
    return;
  }
  const t = makeTransform(view.arena, viewport);

  const [ax0, ay0] = t.toScreen(view.arena.x_min, view.arena.y_max);
  const [ax1, ay1] = t.toScreen(view.arena.x_max, view.arena.y_min);
  ctx.strokeStyle = COLORS.arena;
  ctx.lineWidth = 1;
  ctx.strokeRect(ax0, ay0, ax1 - ax0, ay1 - ay0);

  if (view.start !== null) {
    const [sx, sy] = t.toScreen(view.start.x_mm, view.start.y_mm);
    ctx.beginPath();
    ctx.arc(sx, sy, 6, 0, 2 * Math.PI);
    ctx.strokeStyle = COLORS.start;
    ctx.stroke();
  }

  if (view.target !== null) {
    const [tx, ty] = t.toScreen(view.target.x_mm, view.target.y_mm);
    ctx.beginPath();
    ctx.arc(tx, ty, 8, 0, 2 * Math.PI);
    ctx.strokeStyle = view.goalReached ? COLORS.targetReached : COLORS.target;
    ctx.lineWidth = view.goalReached ? 3 : 1.5;
    ctx.stroke();
  }

  if (view.trace.length > 1) {
    ctx.beginPath();
    const first = view.trace[0]!;
    const [fx, fy] = t.toScreen(first.x_mm, first.y_mm);
    ctx.moveTo(fx, fy);
    for (const p of view.trace.slice(1)) {
      const [px, py] = t.toScreen(p.x_mm, p.y_mm);
      ctx.lineTo(px, py);
    }
    ctx.strokeStyle = COLORS.trace;
    ctx.lineWidth = 1;
    ctx.stroke();
  }

  if (view.latest !== null) {
    const sizeMm = 18 / t.scale;
    const vertices = agentTriangle(
      view.latest.x_mm,
      view.latest.y_mm,
      view.latest.heading_deg,
      sizeMm,
    );
    ctx.beginPath();
    const [nx, ny] = t.toScreen(vertices[0]![0], vertices[0]![1]);
    ctx.moveTo(nx, ny);
    for (const [wx, wy] of vertices.slice(1)) {
      const [px, py] = t.toScreen(wx, wy);
      ctx.lineTo(px, py);
    }
    ctx.closePath();
    ctx.fillStyle = COLORS.agent;
    ctx.fill();
  }

  ctx.font = "13px monospace";
  let bannerY = 20;
  const banner = (text: string, color: string) => {
    ctx.fillStyle = color;
    ctx.fillText(text, 12, bannerY);
    bannerY += 18;
  };
  if (view.connection !== "connected") {
    banner(`connection: ${view.connection}`, COLORS.stale);
  } else if (isStale(view, nowMs)) {
    banner("telemetry stale", COLORS.stale);
  }
  if (view.paused) {
    banner("paused", COLORS.banner);
  }
  if (view.goalReached) {
    banner("goal reached", COLORS.targetReached);
  }
  if (view.autopilot) {
    banner("autopilot on", COLORS.banner);
  }
  if (view.activeStim !== null) {
    banner(
      `stim ${view.activeStim.class} (${view.activeStim.source})`,
      COLORS.agent,
    );
  } else if (
    view.lastStimFlash !== null &&
    nowMs - view.lastStimFlash.atMs < STIM_FLASH_MS
  ) {
    banner(
      `stim ${view.lastStimFlash.action} (${view.lastStimFlash.source})`,
      COLORS.agent,
    );
  }
  if (view.lastError !== null) {
    banner(`error: ${view.lastError}`, COLORS.target);
  }
}
