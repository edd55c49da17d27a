import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roachpilot.stim import (
    Channel,
    DacModel,
    InvalidCommandError,
    PulseTrain,
    StimulusCommand,
    VoltageRangeError,
    biphasic_pair_count,
    build_pulse_train,
    build_pulse_trains,
    quantize_voltage,
    render_dense,
    verify_charge_balance,
)

DAC = DacModel()


def pair_count_oracle(width: float, duration: float, gap: float) -> int:
    """Greedy packing oracle, independent of the closed-form count."""
    t = 0.0
    pairs = 0
    while True:
        span = 2 * width + gap if pairs == 0 else 2 * width + 2 * gap
        if t + span > duration:
            return pairs
        t += span
        pairs += 1


def charge_oracle(train: PulseTrain, dac: DacModel) -> float:
    """Direct integration over the dense rendering at the firmware tick."""
    total = 0.0
    for _, _, voltage in render_dense(train, dac, sample_period_ms=0.25):
        total += (voltage - dac.midscale_voltage) * 0.25
    return total


def cmd(amplitude=2.5, width=12.0, duration=400.0, gap=0.0, channels=(Channel.CERCI,)):
    return StimulusCommand(
        channels=frozenset(channels),
        amplitude_v=amplitude,
        pulse_width_ms=width,
        duration_ms=duration,
        inter_pulse_gap_ms=gap,
    )


class TestQuantize:
    def test_zero(self):
        assert quantize_voltage(0.0, DAC) == 0

    def test_midscale(self):
        assert quantize_voltage(2.5, DAC) == 2048

    def test_full_scale_clamps(self):
        assert quantize_voltage(5.0, DAC) == 4095

    def test_out_of_range(self):
        with pytest.raises(VoltageRangeError):
            quantize_voltage(-0.1, DAC)
        with pytest.raises(VoltageRangeError):
            quantize_voltage(5.1, DAC)

    def test_round_trip_error_over_representable_sweep(self):
        # error <= LSB/2 across the DAC's representable output range
        top = DAC.full_scale_code * DAC.lsb_v
        limit = DAC.lsb_v / 2
        for i in range(10_001):
            v = top * i / 10_000
            code = quantize_voltage(v, DAC)
            assert abs(DAC.code_to_voltage(code) - v) <= limit + 1e-15


class TestBuildPulseTrain:
    def test_counting_400ms(self):
        assert pair_count_oracle(12, 400, 0) == 16
        train = build_pulse_train(cmd(duration=400), DAC)
        assert train.phase_count == 32
        assert train.end_ms == 384.0

    def test_counting_1200ms(self):
        assert pair_count_oracle(12, 1200, 0) == 50
        train = build_pulse_train(cmd(duration=1200), DAC)
        assert train.phase_count == 100
        assert train.end_ms == 1200.0

    def test_too_short(self):
        with pytest.raises(InvalidCommandError):
            build_pulse_train(cmd(duration=23), DAC)

    def test_gap_layout(self):
        train = build_pulse_train(cmd(duration=100, gap=5), DAC)
        # pairs: floor((100+5)/34) = 3; span = 3*24 + 5*5 = 97
        assert train.phase_count == 6
        assert train.end_ms == 97.0
        codes = [c for _, c in train.samples]
        assert codes[-1] == DAC.midscale_code
        assert codes[0] > DAC.midscale_code > codes[2]

    def test_polarity_configurable(self):
        train = build_pulse_train(cmd(), DAC, positive_first=False)
        assert train.samples[0][1] < DAC.midscale_code

    def test_multi_channel_needs_explicit_channel(self):
        both = cmd(channels=(Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA))
        with pytest.raises(InvalidCommandError):
            build_pulse_train(both, DAC)
        trains = build_pulse_trains(both, DAC)
        assert [t.channel for t in trains] == [Channel.LEFT_ANTENNA, Channel.RIGHT_ANTENNA]
        assert trains[0].samples == trains[1].samples

    def test_invalid_amplitude(self):
        with pytest.raises(InvalidCommandError):
            build_pulse_train(cmd(amplitude=0.0), DAC)
        with pytest.raises(InvalidCommandError):
            build_pulse_train(cmd(amplitude=2.6), DAC)

    def test_off_grid_timing_rejected(self):
        with pytest.raises(InvalidCommandError):
            build_pulse_train(cmd(width=12.1), DAC)
        with pytest.raises(InvalidCommandError):
            build_pulse_train(cmd(gap=0.3), DAC)


class TestChargeBalance:
    def test_built_train_balances_exactly(self):
        train = build_pulse_train(cmd(), DAC)
        assert verify_charge_balance(train, DAC) == 0.0

    def test_missing_phase_residual_matches_direct_sum(self):
        train = build_pulse_train(cmd(duration=48), DAC)  # two pairs
        # drop the first positive phase: splice out its edge, keep timing
        samples = list(train.samples)
        t0, _ = samples[0]
        samples[0] = (t0, DAC.midscale_code)
        broken = PulseTrain(train.channel, tuple(samples), train.phase_count - 1)
        swing = train.samples[0][1] - DAC.midscale_code
        expected = -(swing * DAC.lsb_v) * 12.0
        assert verify_charge_balance(broken, DAC) == pytest.approx(expected, abs=1e-12)
        assert charge_oracle(broken, DAC) == pytest.approx(expected, abs=1e-9)

    def test_empty_train(self):
        empty = PulseTrain(Channel.CERCI, (), 0)
        assert verify_charge_balance(empty, DAC) == 0.0

    def test_dense_rendering_agrees(self):
        train = build_pulse_train(cmd(duration=200, gap=4), DAC)
        assert charge_oracle(train, DAC) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(
    amplitude=st.floats(0.001, 2.5),
    width=st.integers(4, 200).map(lambda k: k / 4.0),
    extra=st.floats(0.0, 2000.0),
    gap=st.integers(0, 80).map(lambda k: k / 4.0),
)
def test_property_charge_balance_and_counting(amplitude, width, extra, gap):
    c = cmd(amplitude=amplitude, width=width, duration=2 * width + extra, gap=gap)
    oracle_pairs = pair_count_oracle(width, c.duration_ms, gap)
    if oracle_pairs == 0:
        with pytest.raises(InvalidCommandError):
            build_pulse_train(c, DAC)
        return
    train = build_pulse_train(c, DAC)
    assert train.phase_count == 2 * oracle_pairs
    assert train.phase_count % 2 == 0
    assert train.end_ms <= c.duration_ms + 1e-9
    assert verify_charge_balance(train, DAC) == 0.0
    assert all(0 <= code <= DAC.full_scale_code for _, code in train.samples)


@settings(max_examples=200, deadline=None)
@given(
    width=st.integers(4, 160).map(lambda k: k / 4.0),
    gap=st.integers(0, 40).map(lambda k: k / 4.0),
    d1=st.floats(80.0, 1000.0),
    d2=st.floats(0.0, 1000.0),
)
def test_property_phase_count_monotone_in_duration(width, gap, d1, d2):
    c1 = cmd(width=width, duration=d1, gap=gap)
    c2 = cmd(width=width, duration=d1 + d2, gap=gap)
    assert biphasic_pair_count(c2) >= biphasic_pair_count(c1)


def test_quantization_properties_random_sweep():
    rng = np.random.default_rng(42)
    top = DAC.full_scale_code * DAC.lsb_v
    for v in rng.uniform(0.0, top, size=2000):
        code = quantize_voltage(float(v), DAC)
        assert 0 <= code <= DAC.full_scale_code
        assert abs(DAC.code_to_voltage(code) - v) <= DAC.lsb_v / 2 + 1e-15
