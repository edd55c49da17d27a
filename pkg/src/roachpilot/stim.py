"""Charge-balanced biphasic pulse trains through a modeled multi-channel DAC.

The backpack drives each stimulation channel from a 12-bit DAC referenced at
5 V. A biphasic pulse is a positive phase followed by an equal negative phase
around the DAC midscale, so the signed voltage-time integral of a complete
train is exactly zero. Trains are represented as sparse (time, code) edges;
``render_dense`` expands them onto a sample grid for export.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator


class Channel(enum.IntEnum):
    """Stimulation channel; the value is the channel-mask bit position."""

    LEFT_ANTENNA = 0
    RIGHT_ANTENNA = 1
    CERCI = 2
    SPARE = 3


def channel_mask(channels: Iterable[Channel]) -> int:
    mask = 0
    for ch in channels:
        mask |= 1 << int(ch)
    return mask


def channels_from_mask(mask: int) -> frozenset[Channel]:
    if mask < 0 or mask > 0x0F:
        raise ValueError(f"channel mask out of range: {mask:#x}")
    return frozenset(ch for ch in Channel if mask & (1 << int(ch)))


# Firmware timer tick: pulse widths and gaps snap to this grid. Quarter
# milliseconds are exact binary fractions, so edge-time arithmetic (and with
# it the signed-charge cancellation) stays bit-exact.
TIME_QUANTUM_MS = 0.25


def _on_time_grid(value_ms: float) -> bool:
    quanta = value_ms / TIME_QUANTUM_MS
    return math.isfinite(quanta) and quanta == int(quanta)


class StimulusError(ValueError):
    """Base class for stimulation parameter errors."""


class VoltageRangeError(StimulusError):
    """Voltage outside the DAC's input range."""


class InvalidCommandError(StimulusError):
    """Stimulus command violates its validity constraints."""


@dataclass(frozen=True)
class DacModel:
    """Transfer-function model of the stimulation DAC."""

    resolution_bits: int = 12
    reference_voltage: float = 5.0
    channel_count: int = 4
    sample_period_ms: float = 1.0

    def __post_init__(self) -> None:
        if not 8 <= self.resolution_bits <= 16:
            raise ValueError("resolution_bits must be in [8, 16]")
        if self.reference_voltage <= 0:
            raise ValueError("reference_voltage must be positive")
        if self.channel_count < 1:
            raise ValueError("channel_count must be positive")
        if self.sample_period_ms <= 0:
            raise ValueError("sample_period_ms must be positive")

    @property
    def lsb_v(self) -> float:
        return self.reference_voltage / (1 << self.resolution_bits)

    @property
    def full_scale_code(self) -> int:
        return (1 << self.resolution_bits) - 1

    @property
    def midscale_code(self) -> int:
        return 1 << (self.resolution_bits - 1)

    @property
    def midscale_voltage(self) -> float:
        # midscale_code * lsb == reference/2 exactly for a power-of-two count
        return self.midscale_code * self.lsb_v

    def code_to_voltage(self, code: int) -> float:
        return code * self.lsb_v


def quantize_voltage(v: float, dac: DacModel) -> int:
    """Quantize an absolute voltage to a DAC code (round half up, clamped)."""
    if not math.isfinite(v) or v < 0.0 or v > dac.reference_voltage:
        raise VoltageRangeError(
            f"voltage {v} V outside [0, {dac.reference_voltage}] V"
        )
    code = math.floor(v / dac.lsb_v + 0.5)
    return min(code, dac.full_scale_code)


@dataclass(frozen=True)
class StimulusCommand:
    """One stimulation request for one or more channels.

    ``duration_ms`` is the budget the pulse train must fit into; only complete
    biphasic pairs are emitted. Amplitude is the per-phase peak around
    midscale, so it must not exceed half the DAC reference.
    """

    channels: frozenset[Channel]
    amplitude_v: float
    pulse_width_ms: float
    duration_ms: float
    inter_pulse_gap_ms: float = 0.0

    def __post_init__(self) -> None:
        if isinstance(self.channels, Channel):
            object.__setattr__(self, "channels", frozenset({self.channels}))
        else:
            object.__setattr__(self, "channels", frozenset(self.channels))

    def validate(self, dac: DacModel) -> None:
        if not self.channels:
            raise InvalidCommandError("command requires at least one channel")
        if not 0.0 < self.amplitude_v <= dac.reference_voltage / 2.0:
            raise InvalidCommandError(
                f"amplitude {self.amplitude_v} V must be in "
                f"(0, {dac.reference_voltage / 2.0}] V"
            )
        if self.pulse_width_ms <= 0.0 or not _on_time_grid(self.pulse_width_ms):
            raise InvalidCommandError(
                f"pulse_width_ms must be a positive multiple of {TIME_QUANTUM_MS} ms"
            )
        if self.duration_ms < 2.0 * self.pulse_width_ms:
            raise InvalidCommandError(
                "duration must allow at least one complete biphasic pair"
            )
        if self.inter_pulse_gap_ms < 0.0 or not _on_time_grid(self.inter_pulse_gap_ms):
            raise InvalidCommandError(
                f"inter_pulse_gap_ms must be a non-negative multiple of {TIME_QUANTUM_MS} ms"
            )


@dataclass(frozen=True)
class PulseTrain:
    """Discretized DAC output for one channel.

    ``samples`` are (time_ms, code) edges: the output takes ``code`` at
    ``time_ms`` and holds it until the next edge. The final edge always
    returns to midscale and marks the end of the train.
    """

    channel: Channel
    samples: tuple[tuple[float, int], ...]
    phase_count: int

    @property
    def end_ms(self) -> float:
        return self.samples[-1][0] if self.samples else 0.0


def biphasic_pair_count(cmd: StimulusCommand) -> int:
    """Number of complete +/- pairs that fit in the command duration.

    Phases are ``pulse_width_ms`` long with ``inter_pulse_gap_ms`` of midscale
    between adjacent phases and no trailing gap, so k pairs span
    ``k*2*width + (2k-1)*gap``.
    """
    w, g = cmd.pulse_width_ms, cmd.inter_pulse_gap_ms
    return int(math.floor((cmd.duration_ms + g) / (2.0 * (w + g))))


def build_pulse_train(
    cmd: StimulusCommand,
    dac: DacModel,
    channel: Channel | None = None,
    positive_first: bool = True,
) -> PulseTrain:
    """Build the charge-balanced biphasic train for one channel of a command.

    The amplitude is quantized once as a symmetric swing around midscale
    (clamped to the smaller of the up/down headroom), which makes the signed
    charge of every complete pair cancel exactly.
    """
    cmd.validate(dac)
    if channel is None:
        if len(cmd.channels) != 1:
            raise InvalidCommandError(
                "multi-channel command: pass the channel to build explicitly"
            )
        (channel,) = cmd.channels
    elif channel not in cmd.channels:
        raise InvalidCommandError(f"{channel.name} not in command channels")

    pairs = biphasic_pair_count(cmd)
    if pairs < 1:
        raise InvalidCommandError("duration too short for one biphasic pair")

    mid = dac.midscale_code
    swing = math.floor(cmd.amplitude_v / dac.lsb_v + 0.5)
    swing = min(swing, dac.full_scale_code - mid, mid)
    first, second = (swing, -swing) if positive_first else (-swing, swing)

    w, g = cmd.pulse_width_ms, cmd.inter_pulse_gap_ms
    edges: list[tuple[float, int]] = []
    t = 0.0
    phase_count = 2 * pairs
    for i in range(phase_count):
        edges.append((t, mid + (first if i % 2 == 0 else second)))
        t += w
        if g > 0.0 and i < phase_count - 1:
            edges.append((t, mid))
            t += g
    edges.append((t, mid))
    return PulseTrain(channel=channel, samples=tuple(edges), phase_count=phase_count)


def build_pulse_trains(
    cmd: StimulusCommand, dac: DacModel, positive_first: bool = True
) -> list[PulseTrain]:
    """One identical train per channel in the command, channel-ordered."""
    return [
        build_pulse_train(cmd, dac, channel=ch, positive_first=positive_first)
        for ch in sorted(cmd.channels)
    ]


def verify_charge_balance(train: PulseTrain, dac: DacModel) -> float:
    """Signed charge residual of a train in volt-milliseconds.

    Sums (voltage - midscale) * hold-time over the edges. Complete biphasic
    pairs contribute exactly +x and -x in sequence, so trains from
    ``build_pulse_train`` return exactly 0.0.
    """
    residual = 0.0
    mid = dac.midscale_code
    for (t0, code), (t1, _) in zip(train.samples, train.samples[1:]):
        residual += (code - mid) * dac.lsb_v * (t1 - t0)
    return residual


def render_dense(
    train: PulseTrain, dac: DacModel, sample_period_ms: float | None = None
) -> Iterator[tuple[float, int, float]]:
    """Expand a sparse train onto a sample grid as (time_ms, code, voltage)."""
    period = dac.sample_period_ms if sample_period_ms is None else sample_period_ms
    if period <= 0:
        raise ValueError("sample period must be positive")
    if not train.samples:
        return
    edge_idx = 0
    code = dac.midscale_code
    n = 0
    t = 0.0
    while t < train.end_ms:
        while edge_idx < len(train.samples) and train.samples[edge_idx][0] <= t:
            code = train.samples[edge_idx][1]
            edge_idx += 1
        yield (t, code, dac.code_to_voltage(code))
        n += 1
        t = n * period
