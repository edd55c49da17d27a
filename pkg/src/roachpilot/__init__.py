"""Desk-scale cyborg-insect control stack: stimulation waveforms, a binary
command/telemetry link, a calibrated simulated insect, closed-loop
navigation, gap-negotiation Monte Carlo, and from-scratch statistics."""

from .agent import (
    BehaviorMode,
    InsectAgent,
    Pose,
    ResponseClass,
    ResponseProfile,
    SpontaneousConfig,
    measure_response,
)
from .gap import (
    ArrangementProfile,
    GapOutcome,
    NegotiationState,
    ShutterModel,
    fsm_step,
    load_calibration,
    monte_carlo,
    required_clearance,
    required_lift_force,
    run_gap_trial,
)
from .link import (
    CommandPayload,
    Frame,
    LinkModel,
    MsgType,
    TelemetryPayload,
    crc16,
    decode_frame,
    encode_frame,
    normalize_heading,
    transport_send,
)
from .navigation import (
    AgentObservation,
    NavDecision,
    NavTarget,
    NavigationConfig,
    TrialRecord,
    heading_error,
    nav_decide,
    run_navigation,
    run_trials,
)
from .stats import (
    ContingencyTable,
    TestResult,
    chi_square,
    chi_square_posthoc,
    descriptive,
    heart_rate,
    one_way_anova,
)
from .stim import (
    Channel,
    DacModel,
    PulseTrain,
    StimulusCommand,
    build_pulse_train,
    quantize_voltage,
    verify_charge_balance,
)

__version__ = "0.1.0"
