/**
 * Browser entry: wires the reconnecting client, the canvas renderer, and the
 * operator buttons. Buttons stay disabled from press until the server ack
 * (or the 500 ms timeout); a canvas click places the target at the clicked
 * world position. Manual commands are always allowed, autopilot or not.
 */

import { ConsoleClient } from "./client.js";
import type { CommandAction } from "./protocol.js";
import { makeTransform, renderArena } from "./render.js";

const BUTTON_ACTIONS: CommandAction[] = [
  "left",
  "right",
  "cerci",
  "both-400",
  "both-1200",
  "autopilot-on",
  "autopilot-off",
  "pause",
  "resume",
  "reset",
];

function bridgeUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("bridge") ?? `ws://${window.location.hostname}:8787`;
}

export function startConsole(root: Document): void {
  const canvas = root.getElementById("arena") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    throw new Error("canvas 2d context unavailable");
  }
  const statusLine = root.getElementById("status") as HTMLElement;

  const client = new ConsoleClient(bridgeUrl(), {
    socketFactory: (url) => new WebSocket(url),
  });

  const buttons = new Map<CommandAction, HTMLButtonElement>();
  const buttonBar = root.getElementById("buttons") as HTMLElement;
  for (const action of BUTTON_ACTIONS) {
    const button = root.createElement("button");
    button.textContent = action;
    button.onclick = async () => {
      button.disabled = true;
      const outcome = await client.sendCommand(action);
      button.disabled = false;
      if (!outcome.ok) {
        statusLine.textContent = `${action}: ${outcome.error ?? "failed"}`;
      }
    };
    buttonBar.appendChild(button);
    buttons.set(action, button);
  }

  canvas.onclick = async (ev) => {
    const view = client.view;
    if (view.arena === null) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const px = ev.clientX - rect.left;
    const py = ev.clientY - rect.top;
    const viewport = { width: canvas.width, height: canvas.height, margin: 24 };
    const t = makeTransform(view.arena, viewport);
    const x_mm = view.arena.x_min + (px - viewport.margin) / t.scale;
    const y_mm =
      view.arena.y_min + (viewport.height - viewport.margin - py) / t.scale;
    const outcome = await client.sendCommand("set-target", { x_mm, y_mm });
    if (!outcome.ok) {
      statusLine.textContent = `set-target: ${outcome.error ?? "failed"}`;
    }
  };

  const draw = () => {
    renderArena(
      ctx,
      client.view,
      { width: canvas.width, height: canvas.height, margin: 24 },
      Date.now(),
    );
    const latest = client.view.latest;
    statusLine.textContent =
      `[${client.view.connection}]` +
      (latest
        ? ` tick ${latest.tick}  x ${latest.x_mm.toFixed(1)}  y ${latest.y_mm.toFixed(1)}` +
          `  v ${latest.forward_velocity_mms.toFixed(1)} mm/s`
        : "");
    window.requestAnimationFrame(draw);
  };

  client.connect();
  window.requestAnimationFrame(draw);
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.addEventListener("load", () => startConsole(document));
}
