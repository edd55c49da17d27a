"""Point-to-point navigation policy and the closed loop driving the agent.

Decision rule, evaluated every decision period, in priority order:

1. within the goal radius -> goal reached (terminal)
2. a stimulus is active or being retried -> no new command (refractory)
3. |heading error| above the threshold -> stimulate the antenna on the side
   the body is biased toward (turning it back the other way)
4. stalled (forward velocity below the threshold for the stall dwell) ->
   stimulate cerci
5. otherwise nothing

Axis convention (pinned here and guarded by the mirror-symmetry test):
headings are counter-clockwise positive, and ``heading_error`` is positive
when the target lies to the LEFT of the current heading. A negative error
therefore means the body is biased left of the target, which calls for
left-antenna stimulation; the induced right turn re-centers the target.

Commands travel through the binary frame codec and the lossy link model
exactly as a base station would send them: a command is retried on a missing
ack, at most three retransmissions spaced 50 ms apart, and the agent endpoint
deduplicates by sequence number so duplicate deliveries are harmless. Each
attempt resolves within the sim step it starts in (link latencies are small
against the 100 ms decision period); retry spacing is honored on the virtual
clock.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .agent import InsectAgent, Pose, ResponseProfile, SpontaneousConfig, UnknownStimulusError
from .link import (
    BackpackEndpoint,
    CommandPayload,
    Frame,
    LinkModel,
    LoopbackTransport,
    MsgType,
    NackReason,
    TelemetryPayload,
    decode_frame,
    encode_frame,
    normalize_heading,
    transport_send,
)
from .stim import Channel, StimulusCommand


class NavigationError(ValueError):
    pass


class UndefinedBearingError(NavigationError):
    """Pose and target coincide; the bearing is undefined."""


@dataclass(frozen=True)
class NavTarget:
    x_mm: float
    y_mm: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_mm) and math.isfinite(self.y_mm)):
            raise NavigationError("target coordinates must be finite")


@dataclass(frozen=True)
class NavigationConfig:
    heading_threshold_deg: float = 45.0
    speed_threshold_mms: float = 10.0
    goal_radius_mm: float = 50.0
    antenna_duration_ms: float = 400.0
    cerci_duration_ms: float = 400.0
    decision_period_ms: float = 100.0
    trial_timeout_s: float = 120.0
    refractory_ms: float | None = None  # None: refractory equals the stimulus duration
    stall_dwell_ms: float = 500.0
    amplitude_v: float = 2.5
    pulse_width_ms: float = 12.0

    def __post_init__(self) -> None:
        if not 0.0 < self.heading_threshold_deg < 180.0:
            raise NavigationError("heading_threshold_deg must be in (0, 180)")
        for name in (
            "speed_threshold_mms",
            "goal_radius_mm",
            "antenna_duration_ms",
            "cerci_duration_ms",
            "decision_period_ms",
            "trial_timeout_s",
            "amplitude_v",
            "pulse_width_ms",
        ):
            if getattr(self, name) <= 0:
                raise NavigationError(f"{name} must be positive")
        if self.refractory_ms is not None and self.refractory_ms < 0:
            raise NavigationError("refractory_ms must be non-negative")
        if self.stall_dwell_ms < 0:
            raise NavigationError("stall_dwell_ms must be non-negative")


class NavDecision(enum.Enum):
    NONE = "none"
    STIMULATE_LEFT_ANTENNA = "left_antenna"
    STIMULATE_RIGHT_ANTENNA = "right_antenna"
    STIMULATE_CERCI = "cerci"
    GOAL_REACHED = "goal_reached"


@dataclass(frozen=True)
class AgentObservation:
    """Controller-side view of the agent, decoded from telemetry."""

    x_mm: float
    y_mm: float
    heading_deg: float
    forward_velocity: float
    stim_active: bool
    stalled_ms: float = math.inf


def heading_error(x_mm: float, y_mm: float, heading_deg: float, target: NavTarget) -> float:
    """Signed bearing error in (-180, 180]; positive = target to the left."""
    dx = target.x_mm - x_mm
    dy = target.y_mm - y_mm
    if dx == 0.0 and dy == 0.0:
        raise UndefinedBearingError("pose coincides with target")
    bearing = math.degrees(math.atan2(dy, dx))
    return normalize_heading(bearing - heading_deg)


def nav_decide(obs: AgentObservation, target: NavTarget, cfg: NavigationConfig) -> NavDecision:
    """Pure decision function; see the module docstring for the rule order."""
    if math.hypot(target.x_mm - obs.x_mm, target.y_mm - obs.y_mm) <= cfg.goal_radius_mm:
        return NavDecision.GOAL_REACHED
    if obs.stim_active:
        return NavDecision.NONE
    err = heading_error(obs.x_mm, obs.y_mm, obs.heading_deg, target)
    if abs(err) > cfg.heading_threshold_deg:
        if err < 0.0:
            return NavDecision.STIMULATE_LEFT_ANTENNA
        return NavDecision.STIMULATE_RIGHT_ANTENNA
    if obs.forward_velocity < cfg.speed_threshold_mms and obs.stalled_ms >= cfg.stall_dwell_ms:
        return NavDecision.STIMULATE_CERCI
    return NavDecision.NONE


def command_for_decision(decision: NavDecision, cfg: NavigationConfig) -> StimulusCommand:
    if decision == NavDecision.STIMULATE_LEFT_ANTENNA:
        channels, duration = {Channel.LEFT_ANTENNA}, cfg.antenna_duration_ms
    elif decision == NavDecision.STIMULATE_RIGHT_ANTENNA:
        channels, duration = {Channel.RIGHT_ANTENNA}, cfg.antenna_duration_ms
    elif decision == NavDecision.STIMULATE_CERCI:
        channels, duration = {Channel.CERCI}, cfg.cerci_duration_ms
    else:
        raise NavigationError(f"{decision} is not a stimulation decision")
    return StimulusCommand(
        channels=frozenset(channels),
        amplitude_v=cfg.amplitude_v,
        pulse_width_ms=cfg.pulse_width_ms,
        duration_ms=duration,
    )


@dataclass(frozen=True)
class TrajectoryPoint:
    tick: int
    t_ms: float
    x_mm: float
    y_mm: float
    heading_deg: float
    forward_velocity: float
    turning_velocity: float
    decision: str


@dataclass
class TrialRecord:
    success: bool
    status: str  # "success" | "timeout" | "link-failure"
    time_to_goal_ms: float | None
    decisions: list[tuple[float, NavDecision]]
    trajectory: list[TrajectoryPoint]
    seed: int

    @property
    def decision_counts(self) -> Counter:
        return Counter(d.value for _, d in self.decisions)


MAX_COMMAND_ATTEMPTS = 4  # first transmission plus three retries
RETRY_TIMEOUT_MS = 50.0
MAX_CONSECUTIVE_COMMAND_FAILURES = 3
TELEMETRY_SILENCE_LIMIT_MS = 5000.0


@dataclass
class _PendingCommand:
    frame: bytes
    seq: int
    decision: NavDecision
    duration_ms: float
    attempts: int = 0
    next_attempt_ms: float = 0.0


class NavigationSession:
    """One closed-loop trial: controller, link, and agent on a virtual clock."""

    def __init__(
        self,
        agent: InsectAgent,
        target: NavTarget,
        cfg: NavigationConfig,
        link_model: LinkModel | None = None,
        link_seed: int | np.random.SeedSequence = 0,
        sim_dt_ms: float = 10.0,
    ):
        if cfg.decision_period_ms % sim_dt_ms != 0.0:
            raise NavigationError("decision period must be a multiple of the sim step")
        self.agent = agent
        self.target = target
        self.cfg = cfg
        self.sim_dt_ms = sim_dt_ms
        self._steps_per_decision = int(round(cfg.decision_period_ms / sim_dt_ms))
        self.link_model = link_model or LinkModel()
        ss = (
            link_seed
            if isinstance(link_seed, np.random.SeedSequence)
            else np.random.SeedSequence(link_seed)
        )
        tele_ss, cmd_ss = ss.spawn(2)
        self.telemetry_link = LoopbackTransport(self.link_model, np.random.default_rng(tele_ss))
        self._cmd_rng = np.random.default_rng(cmd_ss)
        self.endpoint = BackpackEndpoint(self._apply_command)
        self.now_ms = 0.0
        self.tick = 0
        self.seq = 0
        self.telemetry: TelemetryPayload | None = None
        self.pending: _PendingCommand | None = None
        self.refractory_until_ms = -math.inf
        self.consecutive_failures = 0
        self.last_telemetry_ms: float | None = None
        self._last_fast_ms = 0.0  # last time telemetry speed was >= threshold

    def _apply_command(self, cmd: StimulusCommand) -> NackReason | None:
        try:
            self.agent.apply_stimulus(cmd)
        except UnknownStimulusError:
            return NackReason.UNSUPPORTED
        except ValueError:
            return NackReason.INVALID_PARAMETERS
        return None

    def _stim_active(self) -> bool:
        return self.pending is not None or self.now_ms < self.refractory_until_ms

    def _poll_telemetry(self) -> None:
        s = self.agent.state
        payload = TelemetryPayload.from_values(
            tick=self.tick,
            x_mm=s.pose.x_mm,
            y_mm=s.pose.y_mm,
            heading_deg=s.pose.heading_deg,
            fwd_vel_mms=s.forward_velocity,
            turn_vel_dps=s.turning_velocity,
            nav_state=int(s.behavior_mode),
        )
        frame = encode_frame(Frame.telemetry(self.tick & 0xFFFF, payload))
        self.telemetry_link.send(frame, self.now_ms)
        for raw in self.telemetry_link.poll(self.now_ms):
            try:
                decoded = decode_frame(raw)
            except Exception:
                continue
            if decoded.msg_type != MsgType.TELEMETRY:
                continue
            self.telemetry = decoded.payload
            self.last_telemetry_ms = self.now_ms
            if decoded.payload.fwd_vel_mms >= self.cfg.speed_threshold_mms:
                self._last_fast_ms = self.now_ms

    def observation(self) -> AgentObservation | None:
        if self.telemetry is None:
            return None
        return AgentObservation(
            x_mm=self.telemetry.x_mm,
            y_mm=self.telemetry.y_mm,
            heading_deg=self.telemetry.heading_deg,
            forward_velocity=self.telemetry.fwd_vel_mms,
            stim_active=self._stim_active(),
            stalled_ms=self.now_ms - self._last_fast_ms,
        )

    def _issue(self, decision: NavDecision) -> None:
        cmd = command_for_decision(decision, self.cfg)
        self.seq = (self.seq + 1) & 0xFFFF
        frame = encode_frame(Frame.command(self.seq, CommandPayload.from_stimulus(cmd)))
        self.pending = _PendingCommand(
            frame=frame,
            seq=self.seq,
            decision=decision,
            duration_ms=cmd.duration_ms,
            next_attempt_ms=self.now_ms,
        )

    def _attempt_exchange(self, p: _PendingCommand) -> bool:
        """One command/ack round trip over the lossy link; True on ack."""
        out = transport_send(p.frame, self.link_model, self._cmd_rng)
        if not out.delivered:
            return False
        reply = self.endpoint.handle_frame(p.frame)
        if reply is None:
            return False
        back = transport_send(reply, self.link_model, self._cmd_rng)
        if not back.delivered:
            return False
        decoded = decode_frame(reply)
        return decoded.msg_type == MsgType.ACK and decoded.seq == p.seq

    def _process_pending(self) -> None:
        p = self.pending
        if p is None or self.now_ms < p.next_attempt_ms:
            return
        p.attempts += 1
        if self._attempt_exchange(p):
            refractory = (
                self.cfg.refractory_ms if self.cfg.refractory_ms is not None else p.duration_ms
            )
            self.refractory_until_ms = self.now_ms + refractory
            self.pending = None
            self.consecutive_failures = 0
        elif p.attempts >= MAX_COMMAND_ATTEMPTS:
            self.pending = None
            self.consecutive_failures += 1
        else:
            p.next_attempt_ms = self.now_ms + RETRY_TIMEOUT_MS

    def run(self, record_trajectory: bool = True, seed_label: int = 0) -> TrialRecord:
        cfg = self.cfg
        decisions: list[tuple[float, NavDecision]] = []
        trajectory: list[TrajectoryPoint] = []
        timeout_ms = cfg.trial_timeout_s * 1000.0
        status = "timeout"
        time_to_goal = None

        while self.now_ms < timeout_ms:
            self._poll_telemetry()
            obs = self.observation()
            decision = NavDecision.NONE if obs is None else nav_decide(obs, self.target, cfg)
            if record_trajectory:
                s = self.agent.state
                trajectory.append(
                    TrajectoryPoint(
                        tick=self.tick,
                        t_ms=self.now_ms,
                        x_mm=s.pose.x_mm,
                        y_mm=s.pose.y_mm,
                        heading_deg=s.pose.heading_deg,
                        forward_velocity=s.forward_velocity,
                        turning_velocity=s.turning_velocity,
                        decision=decision.value,
                    )
                )
            if decision == NavDecision.GOAL_REACHED:
                status = "success"
                time_to_goal = self.now_ms
                break
            if decision != NavDecision.NONE:
                decisions.append((self.now_ms, decision))
                self._issue(decision)

            silent_since = (
                self.last_telemetry_ms if self.last_telemetry_ms is not None else 0.0
            )
            if self.now_ms - silent_since >= TELEMETRY_SILENCE_LIMIT_MS:
                status = "link-failure"
                break
            if self.consecutive_failures >= MAX_CONSECUTIVE_COMMAND_FAILURES:
                status = "link-failure"
                break

            for _ in range(self._steps_per_decision):
                self._process_pending()
                self.agent.step(self.sim_dt_ms)
                self.now_ms += self.sim_dt_ms
            self.tick += 1

        return TrialRecord(
            success=status == "success",
            status=status,
            time_to_goal_ms=time_to_goal,
            decisions=decisions,
            trajectory=trajectory,
            seed=seed_label,
        )


def run_navigation(
    target: NavTarget,
    cfg: NavigationConfig | None = None,
    profile: ResponseProfile | None = None,
    spontaneous: SpontaneousConfig | None = None,
    link_model: LinkModel | None = None,
    start: Pose = Pose(),
    seed: int = 0,
    sim_dt_ms: float = 10.0,
    record_trajectory: bool = True,
    mirror: bool = False,
) -> TrialRecord:
    """Run one seeded closed-loop trial; deterministic in all arguments."""
    cfg = cfg or NavigationConfig()
    root = np.random.SeedSequence(seed)
    agent_ss, link_ss = root.spawn(2)
    agent = InsectAgent(
        profile=profile, spontaneous=spontaneous, seed=agent_ss, start=start, mirror=mirror
    )
    session = NavigationSession(
        agent, target, cfg, link_model=link_model, link_seed=link_ss, sim_dt_ms=sim_dt_ms
    )
    return session.run(record_trajectory=record_trajectory, seed_label=seed)


def run_trials(
    n_trials: int,
    target: NavTarget,
    cfg: NavigationConfig | None = None,
    profile: ResponseProfile | None = None,
    spontaneous: SpontaneousConfig | None = None,
    link_model: LinkModel | None = None,
    start: Pose = Pose(),
    base_seed: int = 0,
    sim_dt_ms: float = 10.0,
    record_trajectory: bool = True,
) -> list[TrialRecord]:
    """Independent seeded trials; trial i draws its streams from (base_seed, i)."""
    records = []
    for i in range(n_trials):
        root = np.random.SeedSequence((base_seed, i))
        agent_ss, link_ss = root.spawn(2)
        agent = InsectAgent(
            profile=profile, spontaneous=spontaneous, seed=agent_ss, start=start
        )
        session = NavigationSession(
            agent,
            target,
            cfg or NavigationConfig(),
            link_model=link_model,
            link_seed=link_ss,
            sim_dt_ms=sim_dt_ms,
        )
        records.append(session.run(record_trajectory=record_trajectory, seed_label=i))
    return records
