/**
 * Reconnecting bridge client. Owns the socket and the session view; commands
 * are sequence-numbered and tracked until the matching ack, an error reply,
 * or a 500 ms timeout, so the UI can disable the pressed button meanwhile.
 *
 * The socket is created through a factory so the same client runs on the
 * browser's native WebSocket and on the `ws` package under Node.
 */

import type { CommandAction, CommandMessage, ServerMessage } from "./protocol.js";
import { parseServerMessage } from "./protocol.js";
import {
  SessionView,
  applyMessage,
  emptyView,
  setConnection,
} from "./viewModel.js";

/** The subset of the WHATWG WebSocket interface the client needs; parameter
 * types are loose so both the browser WebSocket and the ws package fit. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onmessage: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onclose: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface CommandOutcome {
  ok: boolean;
  error?: string;
  timedOut?: boolean;
}

export interface ClientOptions {
  socketFactory: SocketFactory;
  commandTimeoutMs?: number;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  now?: () => number;
  onView?: (view: SessionView) => void;
  onMessage?: (msg: ServerMessage) => void;
}

interface PendingCommand {
  action: CommandAction;
  resolve: (outcome: CommandOutcome) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class ConsoleClient {
  view: SessionView = emptyView();

  private readonly url: string;
  private readonly factory: SocketFactory;
  private readonly commandTimeoutMs: number;
  private readonly reconnectBaseMs: number;
  private readonly reconnectMaxMs: number;
  private readonly now: () => number;
  private readonly onView?: (view: SessionView) => void;
  private readonly onMessage?: (msg: ServerMessage) => void;

  private socket: SocketLike | null = null;
  private seq = 0;
  private pending = new Map<number, PendingCommand>();
  private reconnectDelayMs: number;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(url: string, options: ClientOptions) {
    this.url = url;
    this.factory = options.socketFactory;
    this.commandTimeoutMs = options.commandTimeoutMs ?? 500;
    this.reconnectBaseMs = options.reconnectBaseMs ?? 250;
    this.reconnectMaxMs = options.reconnectMaxMs ?? 4000;
    this.reconnectDelayMs = this.reconnectBaseMs;
    this.now = options.now ?? (() => Date.now());
    this.onView = options.onView;
    this.onMessage = options.onMessage;
  }

  connect(): void {
    if (this.closed) {
      throw new Error("client is closed");
    }
    this.setView(setConnection(this.view, "connecting"));
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.reconnectDelayMs = this.reconnectBaseMs;
      this.setView(setConnection(this.view, "connected"));
    };
    socket.onmessage = (ev: { data: unknown }) => this.handleFrame(String(ev.data));
    socket.onerror = () => {
      /* the close handler owns recovery */
    };
    socket.onclose = () => {
      if (this.socket !== socket) {
        return; // superseded by a newer connection attempt
      }
      this.socket = null;
      this.failAllPending("connection lost");
      this.setView(setConnection(this.view, "disconnected"));
      this.scheduleReconnect();
    };
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.failAllPending("client closed");
    if (this.socket !== null) {
      const socket = this.socket;
      this.socket = null;
      socket.onclose = null;
      socket.close();
    }
    this.setView(setConnection(this.view, "disconnected"));
  }

  get connected(): boolean {
    return this.view.connection === "connected";
  }

  /** True while a command for this action awaits its ack (button disabled). */
  isPending(action: CommandAction): boolean {
    for (const p of this.pending.values()) {
      if (p.action === action) {
        return true;
      }
    }
    return false;
  }

  /**
   * Send a schema-v1 command. Resolves on ack, on an error reply, or after
   * the command timeout; never rejects. Disconnected sends fail locally
   * without touching the socket.
   */
  sendCommand(
    action: CommandAction,
    extra?: { x_mm: number; y_mm: number },
  ): Promise<CommandOutcome> {
    if (!this.connected || this.socket === null) {
      return Promise.resolve({ ok: false, error: "not connected" });
    }
    this.seq = (this.seq + 1) & 0xffff;
    const seq = this.seq;
    const message: CommandMessage = { type: "command", seq, action, ...extra };
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.pending.delete(seq);
        resolve({ ok: false, timedOut: true, error: "ack timeout" });
      }, this.commandTimeoutMs);
      this.pending.set(seq, { action, resolve, timer });
      try {
        this.socket!.send(JSON.stringify(message));
      } catch (err) {
        clearTimeout(timer);
        this.pending.delete(seq);
        resolve({ ok: false, error: String(err) });
      }
    });
  }

  private handleFrame(raw: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(raw);
    } catch {
      return; // unknown frames are ignored, the session continues
    }
    if (msg.type === "ack" && msg.seq !== null) {
      const pending = this.pending.get(msg.seq);
      if (pending !== undefined) {
        clearTimeout(pending.timer);
        this.pending.delete(msg.seq);
        pending.resolve({ ok: true });
      }
    }
    if (msg.type === "error" && msg.seq !== null) {
      const pending = this.pending.get(msg.seq);
      if (pending !== undefined) {
        clearTimeout(pending.timer);
        this.pending.delete(msg.seq);
        pending.resolve({ ok: false, error: msg.message });
      }
    }
    this.setView(applyMessage(this.view, msg, this.now()));
    this.onMessage?.(msg);
  }

  private failAllPending(reason: string): void {
    for (const [seq, pending] of this.pending) {
      clearTimeout(pending.timer);
      pending.resolve({ ok: false, error: reason });
      this.pending.delete(seq);
    }
  }

  private scheduleReconnect(): void {
    if (this.closed || this.reconnectTimer !== null) {
      return;
    }
    const delay = this.reconnectDelayMs;
    this.reconnectDelayMs = Math.min(this.reconnectDelayMs * 2, this.reconnectMaxMs);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      if (!this.closed) {
        this.connect();
      }
    }, delay);
  }

  private setView(view: SessionView): void {
    this.view = view;
    this.onView?.(view);
  }
}
