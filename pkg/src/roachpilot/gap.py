"""Eight-state gap-negotiation behavior machine with Monte Carlo aggregation.

Trials walk a calibrated transition graph from antennal contact to one of the
four terminal outcomes (pass, stuck, return, exit). Per-profile transition
weights, dwell times, and the traversal-time distribution of passing trials
live in a calibration file so the behavioral data stays separate from the
engine; configurable shutter mechanics cover the lift-force and clearance
arithmetic of the physical obstacle.

A trial is capped at 60 simulated seconds. Non-tunnel dwell that exhausts the
cap ends the trial as stuck (an unfinished negotiation), and passing traversal
times are drawn conditioned on the remaining budget: the calibrated tunnel
success weights are empirical outcome rates that already include the one-
minute rule, so re-converting over-budget passes into stuck outcomes would
double-count the cap and bias the success rates away from their calibration.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

GRAVITY_MS2 = 9.81
TRIAL_CAP_S = 60.0


class GapError(ValueError):
    pass


class CalibrationError(GapError):
    pass


class NegotiationState(enum.Enum):
    CONTACT = "contact"
    TUNNEL = "tunnel"
    CLIMB = "climb"
    EXPLORE = "explore"
    PASS = "pass"
    STUCK = "stuck"
    RETURN = "return"
    EXIT = "exit"


TERMINAL_STATES = frozenset(
    {
        NegotiationState.PASS,
        NegotiationState.STUCK,
        NegotiationState.RETURN,
        NegotiationState.EXIT,
    }
)

ALLOWED_EDGES: dict[NegotiationState, frozenset[NegotiationState]] = {
    NegotiationState.CONTACT: frozenset({NegotiationState.TUNNEL, NegotiationState.CLIMB}),
    NegotiationState.TUNNEL: frozenset(
        {NegotiationState.PASS, NegotiationState.STUCK, NegotiationState.EXPLORE}
    ),
    NegotiationState.EXPLORE: frozenset(
        {NegotiationState.TUNNEL, NegotiationState.CLIMB, NegotiationState.RETURN}
    ),
    NegotiationState.CLIMB: frozenset({NegotiationState.EXIT, NegotiationState.EXPLORE}),
}


@dataclass(frozen=True)
class ShutterModel:
    gap_height_mm: float = 8.0
    shutter_mass_g: float = 146.5
    counterweight_mass_g: float = 96.5
    friction_allowance_n: float = 0.0

    def __post_init__(self) -> None:
        if self.gap_height_mm <= 0:
            raise GapError("gap_height_mm must be positive")
        if self.shutter_mass_g < 0 or self.counterweight_mass_g < 0:
            raise GapError("masses must be non-negative")
        if self.friction_allowance_n < 0:
            raise GapError("friction_allowance_n must be non-negative")


def required_lift_force(shutter: ShutterModel) -> float:
    """Force in newtons the animal must apply to start lifting the shutter."""
    net_mass_g = shutter.shutter_mass_g - shutter.counterweight_mass_g
    if net_mass_g < 0:
        warnings.warn(
            "counterweight exceeds shutter mass: shutter self-opens",
            stacklevel=2,
        )
        return 0.0
    return net_mass_g / 1000.0 * GRAVITY_MS2 + shutter.friction_allowance_n


@dataclass(frozen=True)
class TraversalTimeModel:
    """Gamma model of tunnel-onset-to-pass times (positive, right-skewed)."""

    mean_s: float
    sd_s: float

    def __post_init__(self) -> None:
        if self.mean_s <= 0 or self.sd_s <= 0:
            raise GapError("traversal mean and sd must be positive")

    @property
    def shape(self) -> float:
        return (self.mean_s / self.sd_s) ** 2

    @property
    def scale(self) -> float:
        return self.mean_s / self.shape

    def sample(self, rng: np.random.Generator, max_s: float = math.inf) -> float:
        for _ in range(100_000):
            x = float(rng.gamma(self.shape, self.scale))
            if x <= max_s:
                return x
        raise GapError("traversal sampling cannot satisfy the time budget")


@dataclass(frozen=True)
class ArrangementProfile:
    """Calibration bundle for one board arrangement (intact/mounted/implanted)."""

    name: str
    added_height_mm: float
    transition_weights: dict[tuple[NegotiationState, NegotiationState], float]
    traversal_time: TraversalTimeModel
    dwell_s: dict[str, tuple[float, float]]
    body_height_mm: float = 12.0
    compression_factor: float = 0.75
    max_tunnel_attempts: int = 25
    notes: str = ""

    def __post_init__(self) -> None:
        if self.added_height_mm < 0:
            raise GapError("added_height_mm must be non-negative")
        if self.body_height_mm <= 0:
            raise GapError("body_height_mm must be positive")
        if not 0 < self.compression_factor <= 1:
            raise GapError("compression_factor must be in (0, 1]")
        if self.max_tunnel_attempts < 1:
            raise GapError("max_tunnel_attempts must be positive")
        outgoing: dict[NegotiationState, float] = {}
        for (src, dst), w in self.transition_weights.items():
            if src in TERMINAL_STATES:
                raise CalibrationError(f"{self.name}: terminal state {src.value} has an edge")
            if dst not in ALLOWED_EDGES[src]:
                raise CalibrationError(
                    f"{self.name}: edge {src.value}->{dst.value} is not allowed"
                )
            if not 0.0 <= w <= 1.0:
                raise CalibrationError(f"{self.name}: weight {src.value}->{dst.value} not in [0,1]")
            outgoing[src] = outgoing.get(src, 0.0) + w
        for src in ALLOWED_EDGES:
            if not math.isclose(outgoing.get(src, 0.0), 1.0, abs_tol=1e-9):
                raise CalibrationError(
                    f"{self.name}: outgoing weights from {src.value} sum to "
                    f"{outgoing.get(src, 0.0)}, expected 1"
                )
        for key in ("contact", "explore", "climb", "tunnel_fail"):
            if key not in self.dwell_s:
                raise CalibrationError(f"{self.name}: missing dwell range '{key}'")
            lo, hi = self.dwell_s[key]
            if lo < 0 or hi < lo:
                raise CalibrationError(f"{self.name}: bad dwell range '{key}'")

    def edges_from(self, src: NegotiationState) -> list[tuple[NegotiationState, float]]:
        pairs = [
            (dst, w) for (s, dst), w in self.transition_weights.items() if s == src
        ]
        pairs.sort(key=lambda p: p[0].value)
        return pairs


def required_clearance(profile: ArrangementProfile, shutter: ShutterModel) -> float:
    """How far (mm) the shutter must be lifted for this arrangement to fit.

    The body compresses dorsoventrally while tunneling; the mounted board does
    not, so its height adds in full.
    """
    compressed = profile.body_height_mm * profile.compression_factor
    return max(0.0, compressed + profile.added_height_mm - shutter.gap_height_mm)


def fsm_step(
    state: NegotiationState, profile: ArrangementProfile, rng: np.random.Generator
) -> NegotiationState:
    """Sample the next behavioral state; raises on terminal input."""
    if state in TERMINAL_STATES:
        raise GapError(f"fsm_step called on terminal state {state.value}")
    u = float(rng.random())
    acc = 0.0
    edges = profile.edges_from(state)
    for dst, w in edges:
        acc += w
        if u < acc:
            return dst
    return edges[-1][0]  # guard against rounding at u ~= 1.0


@dataclass(frozen=True)
class GapOutcome:
    terminal: NegotiationState
    traversal_time_s: float | None
    state_path: tuple[NegotiationState, ...]
    elapsed_s: float


def run_gap_trial(
    profile: ArrangementProfile,
    shutter: ShutterModel | None = None,
    seed: int | np.random.SeedSequence = 0,
    time_cap_s: float = TRIAL_CAP_S,
) -> GapOutcome:
    """Walk the FSM from contact to a terminal outcome on a seeded clock."""
    del shutter  # geometry is descriptive; the sampled weights carry its effect
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    state = NegotiationState.CONTACT
    path = [state]
    t = 0.0
    traversal: float | None = None
    tunnel_attempts = 0

    def dwell(key: str) -> float:
        lo, hi = profile.dwell_s[key]
        return float(rng.uniform(lo, hi))

    while state not in TERMINAL_STATES:
        if state is NegotiationState.TUNNEL:
            tunnel_attempts += 1
            if tunnel_attempts > profile.max_tunnel_attempts:
                state = NegotiationState.STUCK
            else:
                state = fsm_step(NegotiationState.TUNNEL, profile, rng)
            if state is NegotiationState.PASS:
                remaining = time_cap_s - t
                if remaining <= 0.0:
                    state = NegotiationState.STUCK
                else:
                    traversal = profile.traversal_time.sample(rng, max_s=remaining)
                    t += traversal
            elif state is NegotiationState.EXPLORE:
                t += dwell("tunnel_fail")
                if t >= time_cap_s:
                    # ran out of time while still under the shutter
                    t = time_cap_s
                    state = NegotiationState.STUCK
        else:
            t += dwell(state.value)
            if t >= time_cap_s:
                t = time_cap_s
                state = NegotiationState.STUCK
            else:
                state = fsm_step(state, profile, rng)
        path.append(state)

    return GapOutcome(
        terminal=state,
        traversal_time_s=traversal if state is NegotiationState.PASS else None,
        state_path=tuple(path),
        elapsed_s=t,
    )


@dataclass
class GapSummary:
    profile: str
    n_trials: int
    seed: int
    terminal_counts: dict[str, int]
    edge_counts: dict[str, int]
    tunnel_attempts: int
    tunnel_successes: int
    traversal_times: list[float]

    @property
    def tunnel_success_rate(self) -> float:
        if self.tunnel_attempts == 0:
            return math.nan
        return self.tunnel_successes / self.tunnel_attempts

    def traversal_stats(self) -> dict[str, float]:
        times = self.traversal_times
        n = len(times)
        if n == 0:
            return {"n": 0, "mean_s": math.nan, "sd_s": math.nan, "se_s": math.nan}
        mean = sum(times) / n
        if n == 1:
            return {"n": 1, "mean_s": mean, "sd_s": 0.0, "se_s": 0.0}
        sd = math.sqrt(sum((x - mean) ** 2 for x in times) / (n - 1))
        return {"n": n, "mean_s": mean, "sd_s": sd, "se_s": sd / math.sqrt(n)}

    def success_rate_ci99(self) -> tuple[float, float]:
        """Normal-approximation 99% interval on the tunnel success rate."""
        n = self.tunnel_attempts
        if n == 0:
            return (math.nan, math.nan)
        p = self.tunnel_success_rate
        half = 2.5758293035489004 * math.sqrt(max(p * (1 - p), 0.0) / n)
        return (max(0.0, p - half), min(1.0, p + half))


def monte_carlo(
    profile: ArrangementProfile,
    shutter: ShutterModel | None = None,
    n: int = 10_000,
    seed: int = 0,
) -> tuple[GapSummary, list[GapOutcome]]:
    """Aggregate seeded trials; trial i uses entropy (seed, i)."""
    if n < 1:
        raise GapError("n must be >= 1")
    terminal_counts = {s.value: 0 for s in TERMINAL_STATES}
    edge_counts: dict[str, int] = {}
    tunnel_attempts = 0
    tunnel_successes = 0
    traversal_times: list[float] = []
    outcomes: list[GapOutcome] = []
    for i in range(n):
        outcome = run_gap_trial(profile, shutter, seed=np.random.SeedSequence((seed, i)))
        outcomes.append(outcome)
        terminal_counts[outcome.terminal.value] += 1
        for a, b in zip(outcome.state_path, outcome.state_path[1:]):
            key = f"{a.value}->{b.value}"
            edge_counts[key] = edge_counts.get(key, 0) + 1
            if a is NegotiationState.TUNNEL:
                tunnel_attempts += 1
                if b is NegotiationState.PASS:
                    tunnel_successes += 1
        if outcome.traversal_time_s is not None:
            traversal_times.append(outcome.traversal_time_s)
    summary = GapSummary(
        profile=profile.name,
        n_trials=n,
        seed=seed,
        terminal_counts=terminal_counts,
        edge_counts=dict(sorted(edge_counts.items())),
        tunnel_attempts=tunnel_attempts,
        tunnel_successes=tunnel_successes,
        traversal_times=traversal_times,
    )
    return summary, outcomes


# ---------------------------------------------------------------------------
# Calibration file
# ---------------------------------------------------------------------------

_PROFILE_KEYS = {
    "added_height_mm",
    "body_height_mm",
    "compression_factor",
    "transitions",
    "traversal_time",
    "dwell_s",
    "max_tunnel_attempts",
    "notes",
}
_TRAVERSAL_KEYS = {"family", "mean_s", "sd_s"}


def _parse_profile(name: str, raw: dict) -> ArrangementProfile:
    unknown = set(raw) - _PROFILE_KEYS
    if unknown:
        raise CalibrationError(f"profile '{name}': unknown keys {sorted(unknown)}")
    for key in ("added_height_mm", "transitions", "traversal_time", "dwell_s"):
        if key not in raw:
            raise CalibrationError(f"profile '{name}': missing key '{key}'")
    weights: dict[tuple[NegotiationState, NegotiationState], float] = {}
    for src_name, targets in raw["transitions"].items():
        try:
            src = NegotiationState(src_name)
        except ValueError:
            raise CalibrationError(f"profile '{name}': unknown state '{src_name}'") from None
        if not isinstance(targets, dict):
            raise CalibrationError(f"profile '{name}': transitions.{src_name} must be a map")
        for dst_name, w in targets.items():
            try:
                dst = NegotiationState(dst_name)
            except ValueError:
                raise CalibrationError(
                    f"profile '{name}': unknown state '{dst_name}'"
                ) from None
            weights[(src, dst)] = float(w)
    tt = raw["traversal_time"]
    unknown = set(tt) - _TRAVERSAL_KEYS
    if unknown:
        raise CalibrationError(f"profile '{name}': unknown traversal keys {sorted(unknown)}")
    if tt.get("family", "gamma") != "gamma":
        raise CalibrationError(f"profile '{name}': unsupported traversal family {tt['family']}")
    dwell = {k: (float(v[0]), float(v[1])) for k, v in raw["dwell_s"].items()}
    return ArrangementProfile(
        name=name,
        added_height_mm=float(raw["added_height_mm"]),
        body_height_mm=float(raw.get("body_height_mm", 12.0)),
        compression_factor=float(raw.get("compression_factor", 0.75)),
        transition_weights=weights,
        traversal_time=TraversalTimeModel(float(tt["mean_s"]), float(tt["sd_s"])),
        dwell_s=dwell,
        max_tunnel_attempts=int(raw.get("max_tunnel_attempts", 25)),
        notes=str(raw.get("notes", "")),
    )


def load_calibration(path: str | Path | None = None) -> dict[str, ArrangementProfile]:
    """Load arrangement profiles from a calibration file (bundled by default)."""
    if path is None:
        text = resources.files("roachpilot.data").joinpath("calibration.yaml").read_text()
    else:
        text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CalibrationError(f"calibration file is not valid YAML: {exc}") from None
    if not isinstance(raw, dict) or "profiles" not in raw:
        raise CalibrationError("calibration file must have a top-level 'profiles' map")
    unknown = set(raw) - {"profiles", "notes"}
    if unknown:
        raise CalibrationError(f"unknown top-level keys {sorted(unknown)}")
    return {name: _parse_profile(name, body) for name, body in raw["profiles"].items()}
