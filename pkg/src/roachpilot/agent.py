"""Seeded kinematic insect agent with calibrated stimulus responses.

The agent is a unicycle: heading integrates turning velocity, position
integrates forward velocity along the heading. Stimulation installs a
response envelope whose turn/forward values are drawn from per-class
truncated normals; outside an envelope the velocities relax toward zero with
a first-order time constant. Spontaneous stops and turns fire from seeded
Poisson schedules so that closed-loop stimulation stays necessary.

Sign convention is counter-clockwise-positive throughout: a positive turning
velocity rotates the heading to the left. Stimulating the right antenna
induces a left turn (positive rate) and vice versa.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .link import normalize_heading
from .stim import Channel, StimulusCommand

MM_PER_M = 1000.0

# Duration (ms) at or above which a both-antennae command counts as the long
# (backward-inducing) variant.
BOTH_LONG_THRESHOLD_MS = 800.0


class UnknownStimulusError(ValueError):
    """Channel combination with no calibrated response class."""


class ResponseClass(enum.Enum):
    LEFT_ANTENNA = "left_antenna"
    RIGHT_ANTENNA = "right_antenna"
    CERCI = "cerci"
    BOTH_SHORT = "both_short"
    BOTH_LONG = "both_long"


def classify_command(cmd: StimulusCommand) -> ResponseClass:
    chans = cmd.channels
    if chans == {Channel.LEFT_ANTENNA}:
        return ResponseClass.LEFT_ANTENNA
    if chans == {Channel.RIGHT_ANTENNA}:
        return ResponseClass.RIGHT_ANTENNA
    if chans == {Channel.CERCI}:
        return ResponseClass.CERCI
    if chans == {Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA}:
        if cmd.duration_ms >= BOTH_LONG_THRESHOLD_MS:
            return ResponseClass.BOTH_LONG
        return ResponseClass.BOTH_SHORT
    raise UnknownStimulusError(f"no response class for channels {sorted(chans)}")


@dataclass(frozen=True)
class ResponseParams:
    """Distribution of one stimulus class's induced response.

    ``turn`` fields apply to turning velocity in deg/s, ``fwd`` fields to
    forward velocity in mm/s; a None mean leaves that axis untouched.
    ``duration_ms`` of None means the response lasts as long as the commanded
    stimulus; otherwise the response outlasts or undercuts it by design.
    """

    turn_mean: float | None = None
    turn_sd: float = 0.0
    turn_bounds: tuple[float, float] = (-90.0, 90.0)
    fwd_mean: float | None = None
    fwd_sd: float = 0.0
    fwd_bounds: tuple[float, float] = (-150.0, 150.0)
    duration_ms: float | None = None
    latency_ms: float = 50.0
    habituation: float = 1.0

    def mirrored(self) -> "ResponseParams":
        if self.turn_mean is None:
            return self
        lo, hi = self.turn_bounds
        return replace(self, turn_mean=-self.turn_mean, turn_bounds=(-hi, -lo))


def _default_classes() -> dict[ResponseClass, ResponseParams]:
    return {
        # Right-antenna stimulation turns the animal left (positive, CCW+).
        ResponseClass.RIGHT_ANTENNA: ResponseParams(
            turn_mean=24.26, turn_sd=20.41, turn_bounds=(-90.0, 90.0)
        ),
        ResponseClass.LEFT_ANTENNA: ResponseParams(
            turn_mean=-23.45, turn_sd=17.51, turn_bounds=(-90.0, 90.0)
        ),
        # Cerci stimulation triggers forward running; the response outlasts
        # the 400 ms stimulus and covers the 1 s measurement window.
        ResponseClass.CERCI: ResponseParams(
            fwd_mean=33.01, fwd_sd=13.77, fwd_bounds=(0.0, 150.0), duration_ms=1000.0
        ),
        ResponseClass.BOTH_SHORT: ResponseParams(
            fwd_mean=3.16, fwd_sd=2.20, fwd_bounds=(-50.0, 50.0), duration_ms=1000.0
        ),
        ResponseClass.BOTH_LONG: ResponseParams(
            fwd_mean=-2.03, fwd_sd=2.50, fwd_bounds=(-50.0, 50.0), duration_ms=1200.0
        ),
    }


@dataclass(frozen=True)
class ResponseProfile:
    classes: dict[ResponseClass, ResponseParams] = field(default_factory=_default_classes)

    def __post_init__(self) -> None:
        for cls, p in self.classes.items():
            if p.turn_sd < 0 or p.fwd_sd < 0:
                raise ValueError(f"{cls.value}: SDs must be non-negative")
            if p.duration_ms is not None and p.duration_ms <= 0:
                raise ValueError(f"{cls.value}: duration must be positive")
            if p.latency_ms < 0:
                raise ValueError(f"{cls.value}: latency must be non-negative")
        right = self.classes.get(ResponseClass.RIGHT_ANTENNA)
        left = self.classes.get(ResponseClass.LEFT_ANTENNA)
        if right is not None and right.turn_mean is not None and right.turn_mean <= 0:
            raise ValueError("right-antenna turn mean must be positive (left turn)")
        if left is not None and left.turn_mean is not None and left.turn_mean >= 0:
            raise ValueError("left-antenna turn mean must be negative (right turn)")

    def params(self, cls: ResponseClass) -> ResponseParams:
        try:
            return self.classes[cls]
        except KeyError:
            raise UnknownStimulusError(f"profile has no class {cls.value}") from None

    def mirrored(self) -> "ResponseProfile":
        """Swap left/right antenna classes and negate turn distributions."""
        classes = dict(self.classes)
        left = classes.get(ResponseClass.LEFT_ANTENNA)
        right = classes.get(ResponseClass.RIGHT_ANTENNA)
        if left is not None and right is not None:
            classes[ResponseClass.LEFT_ANTENNA] = right.mirrored()
            classes[ResponseClass.RIGHT_ANTENNA] = left.mirrored()
        return ResponseProfile(classes=classes)


@dataclass(frozen=True)
class SpontaneousConfig:
    """Unstimulated behavior: relaxation plus Poisson stop/turn events."""

    stop_rate_hz: float = 0.2
    turn_rate_hz: float = 0.1
    turn_magnitude_dps: float = 60.0
    turn_duration_s: tuple[float, float] = (0.5, 2.0)
    relax_tau_ms: float = 300.0
    max_speed_mms: float = 300.0
    quiescent_speed_mms: float = 0.5

    @classmethod
    def quiet(cls) -> "SpontaneousConfig":
        """No spontaneous events; used for response calibration runs."""
        return cls(stop_rate_hz=0.0, turn_rate_hz=0.0)


class BehaviorMode(enum.IntEnum):
    QUIESCENT = 0
    WALKING = 1
    BACKWARD_WALKING = 2


@dataclass(frozen=True)
class Pose:
    x_mm: float = 0.0
    y_mm: float = 0.0
    heading_deg: float = 0.0
    t_ms: float = 0.0


@dataclass(frozen=True)
class ResponseEnvelope:
    response_class: ResponseClass
    turn_dps: float | None
    fwd_mms: float | None
    start_ms: float
    end_ms: float

    def active_at(self, t_ms: float) -> bool:
        return self.start_ms <= t_ms < self.end_ms


@dataclass
class AgentState:
    pose: Pose
    forward_velocity: float = 0.0
    turning_velocity: float = 0.0
    active_response: ResponseEnvelope | None = None
    behavior_mode: BehaviorMode = BehaviorMode.QUIESCENT


class InsectAgent:
    """One simulated animal; owns its RNG streams, deterministic per seed."""

    def __init__(
        self,
        profile: ResponseProfile | None = None,
        spontaneous: SpontaneousConfig | None = None,
        seed: int | np.random.SeedSequence = 0,
        start: Pose = Pose(),
        mirror: bool = False,
    ):
        self.profile = profile or ResponseProfile()
        self.spont = spontaneous or SpontaneousConfig()
        self.mirror = mirror
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        ev_ss, resp_ss = ss.spawn(2)
        self._rng_events = np.random.default_rng(ev_ss)
        self._rng_resp = np.random.default_rng(resp_ss)
        self.state = AgentState(pose=start)
        self._habituation_count: dict[ResponseClass, int] = {}
        self._spont_turn: tuple[float, float] | None = None  # (rate_dps, end_ms)
        t0 = start.t_ms
        self._next_stop_ms = t0 + self._exp_interval(self.spont.stop_rate_hz)
        self._next_turn_ms = t0 + self._exp_interval(self.spont.turn_rate_hz)

    def _exp_interval(self, rate_hz: float) -> float:
        if rate_hz <= 0.0:
            return math.inf
        return float(self._rng_events.exponential(1.0 / rate_hz)) * 1000.0

    def _sample_truncated(
        self, mean: float, sd: float, bounds: tuple[float, float], sign: float = 1.0
    ) -> float:
        # ``sign`` flips the underlying deviate so a mirrored agent draws the
        # exact negation of the unmirrored sample from the same stream.
        lo, hi = bounds
        if sd == 0.0:
            return min(max(mean, lo), hi)
        for _ in range(10_000):
            x = mean + sd * sign * float(self._rng_resp.standard_normal())
            if lo <= x <= hi:
                return x
        raise RuntimeError("truncated-normal rejection failed; check bounds")

    def apply_stimulus(self, cmd: StimulusCommand) -> ResponseEnvelope:
        """Install a freshly sampled response envelope (replacing any active one)."""
        cls = classify_command(cmd)
        params = self.profile.params(cls)
        count = self._habituation_count.get(cls, 0)
        scale = params.habituation**count
        self._habituation_count[cls] = count + 1
        turn = None
        if params.turn_mean is not None:
            turn = self._sample_truncated(
                params.turn_mean * scale,
                params.turn_sd,
                params.turn_bounds,
                sign=-1.0 if self.mirror else 1.0,
            )
        fwd = None
        if params.fwd_mean is not None:
            fwd = self._sample_truncated(
                params.fwd_mean * scale, params.fwd_sd, params.fwd_bounds
            )
        start = self.state.pose.t_ms + params.latency_ms
        duration = params.duration_ms if params.duration_ms is not None else cmd.duration_ms
        envelope = ResponseEnvelope(
            response_class=cls,
            turn_dps=turn,
            fwd_mms=fwd,
            start_ms=start,
            end_ms=start + duration,
        )
        self.state.active_response = envelope
        return envelope

    def _fire_events(self, until_ms: float) -> None:
        while min(self._next_stop_ms, self._next_turn_ms) <= until_ms:
            if self._next_stop_ms <= self._next_turn_ms:
                # Spontaneous stop: interrupts any response, velocities decay.
                self.state.active_response = None
                self._spont_turn = None
                self._next_stop_ms += self._exp_interval(self.spont.stop_rate_hz)
            else:
                t = self._next_turn_ms
                mag = self.spont.turn_magnitude_dps
                rate = float(self._rng_events.uniform(-mag, mag))
                if self.mirror:
                    rate = -rate
                lo, hi = self.spont.turn_duration_s
                dur = float(self._rng_events.uniform(lo, hi)) * 1000.0
                self._spont_turn = (rate, t + dur)
                self._next_turn_ms += self._exp_interval(self.spont.turn_rate_hz)

    def step(self, dt_ms: float) -> AgentState:
        """Advance the kinematics by dt (ms); dt must be in (0, 50]."""
        if not 0.0 < dt_ms <= 50.0:
            raise ValueError("dt_ms must be in (0, 50]")
        s = self.state
        t0 = s.pose.t_ms
        t1 = t0 + dt_ms
        self._fire_events(t1)

        env = s.active_response
        if env is not None and t0 >= env.end_ms:
            env = None
            s.active_response = None
        env_on = env is not None and env.active_at(t0)
        if self._spont_turn is not None and self._spont_turn[1] <= t0:
            self._spont_turn = None

        decay = math.exp(-dt_ms / self.spont.relax_tau_ms)
        if env_on and env.turn_dps is not None:
            omega = env.turn_dps
        elif self._spont_turn is not None:
            omega = self._spont_turn[0]
        else:
            omega = s.turning_velocity * decay
        if env_on and env.fwd_mms is not None:
            v = env.fwd_mms
        else:
            v = s.forward_velocity * decay
        v = max(-self.spont.max_speed_mms, min(self.spont.max_speed_mms, v))

        heading = normalize_heading(s.pose.heading_deg + omega * dt_ms / 1000.0)
        rad = math.radians(heading)
        dist = v * dt_ms / 1000.0
        s.pose = Pose(
            x_mm=s.pose.x_mm + dist * math.cos(rad),
            y_mm=s.pose.y_mm + dist * math.sin(rad),
            heading_deg=heading,
            t_ms=t1,
        )
        s.forward_velocity = v
        s.turning_velocity = omega
        if v < 0.0:
            s.behavior_mode = BehaviorMode.BACKWARD_WALKING
        elif v <= self.spont.quiescent_speed_mms:
            s.behavior_mode = BehaviorMode.QUIESCENT
        else:
            s.behavior_mode = BehaviorMode.WALKING
        return s


_CLASS_COMMANDS = {
    ResponseClass.LEFT_ANTENNA: ({Channel.LEFT_ANTENNA}, 400.0),
    ResponseClass.RIGHT_ANTENNA: ({Channel.RIGHT_ANTENNA}, 400.0),
    ResponseClass.CERCI: ({Channel.CERCI}, 400.0),
    ResponseClass.BOTH_SHORT: ({Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA}, 400.0),
    ResponseClass.BOTH_LONG: ({Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA}, 1200.0),
}


def canonical_command(cls: ResponseClass) -> StimulusCommand:
    channels, duration = _CLASS_COMMANDS[cls]
    return StimulusCommand(
        channels=frozenset(channels),
        amplitude_v=2.5,
        pulse_width_ms=12.0,
        duration_ms=duration,
    )


def measure_response(
    response_class: ResponseClass,
    n_events: int = 1000,
    seed: int = 0,
    profile: ResponseProfile | None = None,
    dt_ms: float = 10.0,
) -> tuple[float, float]:
    """Mean and SD of the per-event response metric over repeated stimulations.

    Turn classes average turning velocity over the stimulus duration; forward
    classes average forward velocity over the 1 s window after onset. Windows
    start at response onset (command time plus latency) and each event runs on
    a fresh quiescent agent with spontaneous behavior disabled, so this
    measures the response generator itself.
    """
    profile = profile or ResponseProfile()
    cmd = canonical_command(response_class)
    params = profile.params(response_class)
    is_turn = params.turn_mean is not None
    window_ms = cmd.duration_ms if is_turn else 1000.0
    root = np.random.SeedSequence(seed)
    metrics = np.empty(n_events)
    for i, child in enumerate(root.spawn(n_events)):
        agent = InsectAgent(
            profile=profile, spontaneous=SpontaneousConfig.quiet(), seed=child
        )
        agent.apply_stimulus(cmd)
        t = 0.0
        while t < params.latency_ms - 1e-9:
            agent.step(dt_ms)
            t += dt_ms
        total = 0.0
        steps = 0
        while t < params.latency_ms + window_ms - 1e-9:
            state = agent.step(dt_ms)
            total += state.turning_velocity if is_turn else state.forward_velocity
            steps += 1
            t += dt_ms
        metrics[i] = total / steps
    return float(metrics.mean()), float(metrics.std(ddof=1))
