"""Live simulation bridge: one session, many observers, schema-v1 messages.

The session core is synchronous and fully deterministic per seed; the async
layer paces it on a virtual clock (``time_scale`` real-time factor, 0 means
unpaced) and fans telemetry out over WebSocket. Each WebSocket text frame
carries exactly one JSON message.

Schema v1 (client -> server):

    {"type": "command", "seq": <int>, "action": <str>, ...}

where action is one of left, right, cerci, both-400, both-1200 (stimulation),
set-target (requires x_mm, y_mm), autopilot-on, autopilot-off, pause, resume,
reset. Every command is answered with an ack or an error carrying the same
seq. Server -> client messages are hello, telemetry, ack, error, and event
(kinds: stim-applied, stim-rejected, goal-reached, target-set, autopilot,
paused, resumed, reset, heartbeat).

Stimulation requests from the operator and the autopilot funnel through one
queue; when both race in the same tick the operator's command wins. All
stimulation flows through the binary frame codec, the lossy link model, and
the backpack endpoint exactly as in batch navigation.
"""

from __future__ import annotations

import asyncio
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .agent import InsectAgent
from .link import (
    BackpackEndpoint,
    CommandPayload,
    Frame,
    MsgType,
    NackReason,
    decode_frame,
    encode_frame,
    transport_send,
)
from .navigation import NavDecision, NavTarget, command_for_decision, nav_decide
from .navigation import AgentObservation
from .scenario import Scenario
from .stim import Channel, StimulusCommand

SCHEMA_VERSION = 1
HEARTBEAT_INTERVAL_S = 0.25
CLIENT_QUEUE_LIMIT = 256

STIM_ACTIONS = {"left", "right", "cerci", "both-400", "both-1200"}
ALL_ACTIONS = STIM_ACTIONS | {
    "set-target",
    "autopilot-on",
    "autopilot-off",
    "pause",
    "resume",
    "reset",
}


@dataclass
class _QueuedCommand:
    action: str
    source: str  # "manual" | "autopilot"
    seq: int | None = None
    client: Any = None
    x_mm: float | None = None
    y_mm: float | None = None


class ServeSession:
    """Synchronous session core: virtual clock, agent, autopilot, arbitration."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.nav_cfg = scenario.navigation_config()
        self.tick_ms = 1000.0 / scenario.telemetry_hz
        if self.tick_ms > 50.0:
            raise ValueError("telemetry_hz too low: sim step would exceed 50 ms")
        self._decision_every = max(
            1, int(round(self.nav_cfg.decision_period_ms / self.tick_ms))
        )
        self.paused = False
        self.autopilot = False
        self.target: NavTarget | None = scenario.target()
        self.goal_announced = False
        self._queue: list[_QueuedCommand] = []
        self._reset_state()

    def _reset_state(self) -> None:
        root = np.random.SeedSequence(self.scenario.seed)
        agent_ss, link_ss = root.spawn(2)
        self.agent = InsectAgent(
            profile=self.scenario.response_profile(),
            spontaneous=self.scenario.spontaneous_config(),
            seed=agent_ss,
            start=self.scenario.start_pose(),
        )
        self.link_model = self.scenario.link_model()
        self._link_rng = np.random.default_rng(link_ss)
        self.endpoint = BackpackEndpoint(self._apply_stimulus)
        self.tick = 0
        self.seq = 0
        self.refractory_until_ms = -math.inf
        self._last_fast_ms = 0.0
        self.last_stim: dict[str, Any] | None = None
        self.goal_announced = False

    # -- command handling ---------------------------------------------------

    def submit(self, cmd: _QueuedCommand) -> None:
        self._queue.append(cmd)

    def _apply_stimulus(self, cmd: StimulusCommand) -> NackReason | None:
        try:
            self.agent.apply_stimulus(cmd)
        except ValueError:
            return NackReason.UNSUPPORTED
        return None

    def _stim_command(self, action: str) -> StimulusCommand:
        cfg = self.nav_cfg
        table = {
            "left": ({Channel.LEFT_ANTENNA}, cfg.antenna_duration_ms),
            "right": ({Channel.RIGHT_ANTENNA}, cfg.antenna_duration_ms),
            "cerci": ({Channel.CERCI}, cfg.cerci_duration_ms),
            "both-400": ({Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA}, 400.0),
            "both-1200": ({Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA}, 1200.0),
        }
        channels, duration = table[action]
        return StimulusCommand(
            channels=frozenset(channels),
            amplitude_v=cfg.amplitude_v,
            pulse_width_ms=cfg.pulse_width_ms,
            duration_ms=duration,
        )

    def _send_stimulus(self, cmd: StimulusCommand, source: str) -> tuple[bool, str]:
        """Push one command through codec, link, and endpoint; True if acked."""
        self.seq = (self.seq + 1) & 0xFFFF
        frame = encode_frame(Frame.command(self.seq, CommandPayload.from_stimulus(cmd)))
        out = transport_send(frame, self.link_model, self._link_rng)
        if not out.delivered:
            return False, "command frame lost on link"
        reply = self.endpoint.handle_frame(frame)
        if reply is None:
            return False, "no reply from backpack"
        back = transport_send(reply, self.link_model, self._link_rng)
        if not back.delivered:
            return False, "ack lost on link"
        decoded = decode_frame(reply)
        if decoded.msg_type != MsgType.ACK:
            return False, f"backpack nack (reason {decoded.payload.reason})"
        now = self.now_ms
        duration = (
            self.nav_cfg.refractory_ms
            if self.nav_cfg.refractory_ms is not None
            else cmd.duration_ms
        )
        self.refractory_until_ms = now + duration
        from .agent import classify_command

        self.last_stim = {
            "class": classify_command(cmd).value,
            "source": source,
            "seq": self.seq,
            "t_ms": now,
        }
        return True, ""

    @property
    def now_ms(self) -> float:
        return self.tick * self.tick_ms

    def _stim_active(self) -> bool:
        return self.now_ms < self.refractory_until_ms

    def _drain_queue(self) -> list[dict[str, Any]]:
        """Apply queued commands; stimulation is arbitrated manual-first."""
        events: list[dict[str, Any]] = []
        stim_requests = [c for c in self._queue if c.action in STIM_ACTIONS]
        other = [c for c in self._queue if c.action not in STIM_ACTIONS]
        self._queue = []

        for cmd in other:
            events.extend(self._apply_control(cmd))

        if stim_requests:
            manual = [c for c in stim_requests if c.source == "manual"]
            chosen = manual[0] if manual else stim_requests[0]
            ok, why = self._send_stimulus(self._stim_command(chosen.action), chosen.source)
            kind = "stim-applied" if ok else "stim-rejected"
            event = {
                "type": "event",
                "kind": kind,
                "action": chosen.action,
                "source": chosen.source,
                "tick": self.tick,
            }
            if not ok:
                event["reason"] = why
            events.append(event)
        return events

    def _apply_control(self, cmd: _QueuedCommand) -> list[dict[str, Any]]:
        if cmd.action == "set-target":
            self.target = NavTarget(float(cmd.x_mm), float(cmd.y_mm))
            self.goal_announced = False
            return [
                {
                    "type": "event",
                    "kind": "target-set",
                    "x_mm": self.target.x_mm,
                    "y_mm": self.target.y_mm,
                    "tick": self.tick,
                }
            ]
        if cmd.action == "autopilot-on":
            self.autopilot = True
            return [{"type": "event", "kind": "autopilot", "on": True, "tick": self.tick}]
        if cmd.action == "autopilot-off":
            self.autopilot = False
            return [{"type": "event", "kind": "autopilot", "on": False, "tick": self.tick}]
        if cmd.action == "pause":
            self.paused = True
            return [{"type": "event", "kind": "paused", "tick": self.tick}]
        if cmd.action == "resume":
            self.paused = False
            return [{"type": "event", "kind": "resumed", "tick": self.tick}]
        if cmd.action == "reset":
            self._reset_state()
            return [{"type": "event", "kind": "reset", "tick": self.tick}]
        raise ValueError(f"unknown control action {cmd.action}")

    # -- autopilot ----------------------------------------------------------

    def _autopilot_decide(self) -> list[dict[str, Any]]:
        if not self.autopilot or self.target is None:
            return []
        s = self.agent.state
        if s.forward_velocity >= self.nav_cfg.speed_threshold_mms:
            self._last_fast_ms = self.now_ms
        obs = AgentObservation(
            x_mm=s.pose.x_mm,
            y_mm=s.pose.y_mm,
            heading_deg=s.pose.heading_deg,
            forward_velocity=s.forward_velocity,
            stim_active=self._stim_active(),
            stalled_ms=self.now_ms - self._last_fast_ms,
        )
        decision = nav_decide(obs, self.target, self.nav_cfg)
        if decision == NavDecision.GOAL_REACHED:
            if self.goal_announced:
                return []
            self.goal_announced = True
            self.autopilot = False
            return [
                {
                    "type": "event",
                    "kind": "goal-reached",
                    "tick": self.tick,
                    "t_ms": self.now_ms,
                    "x_mm": s.pose.x_mm,
                    "y_mm": s.pose.y_mm,
                }
            ]
        if decision != NavDecision.NONE:
            action = {
                NavDecision.STIMULATE_LEFT_ANTENNA: "left",
                NavDecision.STIMULATE_RIGHT_ANTENNA: "right",
                NavDecision.STIMULATE_CERCI: "cerci",
            }[decision]
            self.submit(_QueuedCommand(action=action, source="autopilot"))
        return []

    # -- main advance -------------------------------------------------------

    def telemetry_message(self) -> dict[str, Any]:
        s = self.agent.state
        stim = None
        if self.last_stim is not None and self._stim_active():
            stim = {"class": self.last_stim["class"], "source": self.last_stim["source"]}
        return {
            "type": "telemetry",
            "tick": self.tick,
            "t_ms": self.now_ms,
            "x_mm": s.pose.x_mm,
            "y_mm": s.pose.y_mm,
            "heading_deg": s.pose.heading_deg,
            "forward_velocity_mms": s.forward_velocity,
            "turning_velocity_dps": s.turning_velocity,
            "nav_state": int(s.behavior_mode),
            "stim": stim,
        }

    def advance(self) -> list[dict[str, Any]]:
        """One tick: arbitrate commands, run autopilot, step, emit messages."""
        messages: list[dict[str, Any]] = []
        if self.tick % self._decision_every == 0:
            messages.extend(self._autopilot_decide())
        messages.extend(self._drain_queue())
        self.agent.step(self.tick_ms)
        self.tick += 1
        messages.append(self.telemetry_message())
        return messages

    def hello_message(self) -> dict[str, Any]:
        return {
            "type": "hello",
            "version": SCHEMA_VERSION,
            "seed": self.scenario.seed,
            "tick": self.tick,
            "time_scale": self.scenario.time_scale,
            "arena": self.scenario.arena,
            "start": self.scenario.resolved["start"],
            "target": (
                {"x_mm": self.target.x_mm, "y_mm": self.target.y_mm}
                if self.target is not None
                else None
            ),
            "autopilot": self.autopilot,
            "paused": self.paused,
            "goal_reached": self.goal_announced,
        }


def parse_client_message(raw: str | bytes) -> _QueuedCommand:
    """Validate one schema-v1 client message; raises ValueError with a reason."""
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not valid JSON: {exc}") from None
    if not isinstance(msg, dict) or msg.get("type") != "command":
        raise ValueError("expected a message with type 'command'")
    action = msg.get("action")
    if action not in ALL_ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    seq = msg.get("seq")
    if seq is not None and not isinstance(seq, int):
        raise ValueError("seq must be an integer")
    cmd = _QueuedCommand(action=action, source="manual", seq=seq)
    if action == "set-target":
        try:
            cmd.x_mm = float(msg["x_mm"])
            cmd.y_mm = float(msg["y_mm"])
        except (KeyError, TypeError, ValueError):
            raise ValueError("set-target requires numeric x_mm and y_mm") from None
    return cmd


class BridgeServer:
    """WebSocket fan-out around one ServeSession."""

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 8787):
        self.session = ServeSession(scenario)
        self.host = host
        self.port = port
        self.clients: dict[Any, asyncio.Queue] = {}
        self._stop = asyncio.Event()

    # -- client plumbing ----------------------------------------------------

    def _enqueue(self, queue: asyncio.Queue, message: dict[str, Any], droppable: bool) -> None:
        try:
            queue.put_nowait(message)
        except asyncio.QueueFull:
            if droppable:
                return  # slow consumer: telemetry frames are sacrificed
            try:
                queue.get_nowait()  # evict oldest to make room for the event
            except asyncio.QueueEmpty:
                pass
            queue.put_nowait(message)

    def broadcast(self, messages: list[dict[str, Any]]) -> None:
        for message in messages:
            droppable = message.get("type") == "telemetry"
            for queue in self.clients.values():
                self._enqueue(queue, message, droppable)

    async def _writer(self, ws, queue: asyncio.Queue) -> None:
        while True:
            message = await queue.get()
            await ws.send(json.dumps(message))

    async def _handle_client(self, ws) -> None:
        queue: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_QUEUE_LIMIT)
        self.clients[ws] = queue
        writer = asyncio.create_task(self._writer(ws, queue))
        try:
            await ws.send(json.dumps(self.session.hello_message()))
            async for raw in ws:
                try:
                    cmd = parse_client_message(raw)
                except ValueError as exc:
                    self._enqueue(
                        queue,
                        {"type": "error", "message": str(exc), "seq": None},
                        droppable=False,
                    )
                    continue
                cmd.client = ws
                self.session.submit(cmd)
                self._enqueue(queue, {"type": "ack", "seq": cmd.seq}, droppable=False)
        finally:
            writer.cancel()
            self.clients.pop(ws, None)

    # -- pacing loop ----------------------------------------------------------

    async def _ticker(self) -> None:
        scale = self.session.scenario.time_scale
        tick_s = self.session.tick_ms / 1000.0
        loop = asyncio.get_running_loop()
        last_heartbeat = loop.time()
        next_tick = loop.time()
        while not self._stop.is_set():
            now = loop.time()
            if now - last_heartbeat >= HEARTBEAT_INTERVAL_S:
                last_heartbeat = now
                self.broadcast(
                    [{"type": "event", "kind": "heartbeat", "tick": self.session.tick}]
                )
            if self.session.paused:
                # control messages still flow; the virtual clock is frozen
                self.broadcast(self.session._drain_queue())
                await asyncio.sleep(0.01)
                continue
            self.broadcast(self.session.advance())
            if scale > 0:
                next_tick += tick_s / scale
                delay = next_tick - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_tick = loop.time()
            else:
                await asyncio.sleep(0)

    async def run(self, duration_s: float | None = None, on_started=None) -> None:
        import websockets.asyncio.server

        async with websockets.asyncio.server.serve(
            self._handle_client, self.host, self.port
        ) as server:
            if on_started is not None:
                on_started()
            ticker = asyncio.create_task(self._ticker())
            try:
                if duration_s is None:
                    await self._stop.wait()
                else:
                    await asyncio.wait_for(self._stop.wait(), timeout=duration_s)
            except asyncio.TimeoutError:
                pass
            finally:
                self._stop.set()
                ticker.cancel()
                server.close()

    def stop(self) -> None:
        self._stop.set()
