"""Scenario configuration: strict YAML loading and the resolved-config dict
that every artifact embeds so runs can be reproduced byte-for-byte.

Unknown keys are rejected with the full field path; values are validated
before any simulation object is built. The same resolved dict drives batch
runs, the serve bridge, and re-runs from embedded artifact headers.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .agent import (
    Pose,
    ResponseClass,
    ResponseParams,
    ResponseProfile,
    SpontaneousConfig,
)
from .link import LinkModel
from .navigation import NavTarget, NavigationConfig


class ConfigError(ValueError):
    pass


DEFAULT_SCENARIO: dict[str, Any] = {
    "seed": 0,
    "trials": 35,
    "time_scale": 1.0,
    "arena": {"x_min": -250.0, "x_max": 1250.0, "y_min": -750.0, "y_max": 750.0},
    "start": {"x_mm": 0.0, "y_mm": 0.0, "heading_deg": 0.0},
    "target": {"x_mm": 1000.0, "y_mm": 0.0},
    "navigation": {
        "heading_threshold_deg": 45.0,
        "speed_threshold_mms": 10.0,
        "goal_radius_mm": 50.0,
        "antenna_duration_ms": 400.0,
        "cerci_duration_ms": 400.0,
        "decision_period_ms": 100.0,
        "trial_timeout_s": 120.0,
        "refractory_ms": None,
        "stall_dwell_ms": 500.0,
        "amplitude_v": 2.5,
        "pulse_width_ms": 12.0,
    },
    "response_profile": {
        "right_antenna": {
            "turn_mean": 24.26,
            "turn_sd": 20.41,
            "turn_bounds": [-90.0, 90.0],
            "latency_ms": 50.0,
            "habituation": 1.0,
        },
        "left_antenna": {
            "turn_mean": -23.45,
            "turn_sd": 17.51,
            "turn_bounds": [-90.0, 90.0],
            "latency_ms": 50.0,
            "habituation": 1.0,
        },
        "cerci": {
            "fwd_mean": 33.01,
            "fwd_sd": 13.77,
            "fwd_bounds": [0.0, 150.0],
            "duration_ms": 1000.0,
            "latency_ms": 50.0,
            "habituation": 1.0,
        },
        "both_short": {
            "fwd_mean": 3.16,
            "fwd_sd": 2.20,
            "fwd_bounds": [-50.0, 50.0],
            "duration_ms": 1000.0,
            "latency_ms": 50.0,
            "habituation": 1.0,
        },
        "both_long": {
            "fwd_mean": -2.03,
            "fwd_sd": 2.50,
            "fwd_bounds": [-50.0, 50.0],
            "duration_ms": 1200.0,
            "latency_ms": 50.0,
            "habituation": 1.0,
        },
    },
    "spontaneous": {
        "stop_rate_hz": 0.2,
        "turn_rate_hz": 0.1,
        "turn_magnitude_dps": 60.0,
        "turn_duration_s": [0.5, 2.0],
        "relax_tau_ms": 300.0,
        "max_speed_mms": 300.0,
    },
    "link": {"drop_probability": 0.0, "latency_ms": 0.0, "latency_jitter_ms": 0.0},
    "sim": {"dt_ms": 10.0, "telemetry_hz": 30.0},
    "density_cell_mm": 50.0,
}

_TURN_CLASSES = {"right_antenna", "left_antenna"}
_FWD_CLASSES = {"cerci", "both_short", "both_long"}


def _merge(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _require_number(resolved: dict, *path: str) -> float:
    node: Any = resolved
    for key in path:
        node = node[key]
    if not isinstance(node, (int, float)) or isinstance(node, bool):
        raise ConfigError(f"{'.'.join(path)}: expected a number, got {node!r}")
    return float(node)


@dataclass(frozen=True)
class Scenario:
    """Validated scenario; ``resolved`` is the JSON-safe embedded form."""

    resolved: dict[str, Any]

    @property
    def seed(self) -> int:
        return int(self.resolved["seed"])

    @property
    def trials(self) -> int:
        return int(self.resolved["trials"])

    @property
    def time_scale(self) -> float:
        return float(self.resolved["time_scale"])

    @property
    def arena(self) -> dict[str, float]:
        return self.resolved["arena"]

    @property
    def density_cell_mm(self) -> float:
        return float(self.resolved["density_cell_mm"])

    @property
    def sim_dt_ms(self) -> float:
        return float(self.resolved["sim"]["dt_ms"])

    @property
    def telemetry_hz(self) -> float:
        return float(self.resolved["sim"]["telemetry_hz"])

    def start_pose(self) -> Pose:
        s = self.resolved["start"]
        return Pose(x_mm=s["x_mm"], y_mm=s["y_mm"], heading_deg=s["heading_deg"], t_ms=0.0)

    def target(self) -> NavTarget:
        t = self.resolved["target"]
        return NavTarget(x_mm=t["x_mm"], y_mm=t["y_mm"])

    def navigation_config(self) -> NavigationConfig:
        nav = dict(self.resolved["navigation"])
        return NavigationConfig(**nav)

    def response_profile(self) -> ResponseProfile:
        classes = {}
        for name, raw in self.resolved["response_profile"].items():
            cls = ResponseClass(name)
            kwargs: dict[str, Any] = {
                "latency_ms": raw["latency_ms"],
                "habituation": raw["habituation"],
            }
            if name in _TURN_CLASSES:
                kwargs.update(
                    turn_mean=raw["turn_mean"],
                    turn_sd=raw["turn_sd"],
                    turn_bounds=tuple(raw["turn_bounds"]),
                )
            else:
                kwargs.update(
                    fwd_mean=raw["fwd_mean"],
                    fwd_sd=raw["fwd_sd"],
                    fwd_bounds=tuple(raw["fwd_bounds"]),
                    duration_ms=raw["duration_ms"],
                )
            classes[cls] = ResponseParams(**kwargs)
        return ResponseProfile(classes=classes)

    def spontaneous_config(self) -> SpontaneousConfig:
        s = self.resolved["spontaneous"]
        return SpontaneousConfig(
            stop_rate_hz=s["stop_rate_hz"],
            turn_rate_hz=s["turn_rate_hz"],
            turn_magnitude_dps=s["turn_magnitude_dps"],
            turn_duration_s=tuple(s["turn_duration_s"]),
            relax_tau_ms=s["relax_tau_ms"],
            max_speed_mms=s["max_speed_mms"],
        )

    def link_model(self) -> LinkModel:
        raw = self.resolved["link"]
        return LinkModel(
            drop_probability=raw["drop_probability"],
            latency_ms=raw["latency_ms"],
            latency_jitter_ms=raw["latency_jitter_ms"],
        )

    def to_json(self) -> str:
        return json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))


def _validate(resolved: dict[str, Any]) -> None:
    if not isinstance(resolved["seed"], int) or isinstance(resolved["seed"], bool):
        raise ConfigError("seed: an explicit integer seed is required")
    if not isinstance(resolved["trials"], int) or resolved["trials"] < 0:
        raise ConfigError("trials: must be a non-negative integer")
    if _require_number(resolved, "time_scale") < 0:
        raise ConfigError("time_scale: must be >= 0 (0 means unpaced)")
    arena = resolved["arena"]
    for key in ("x_min", "x_max", "y_min", "y_max"):
        _require_number(resolved, "arena", key)
    if arena["x_min"] >= arena["x_max"] or arena["y_min"] >= arena["y_max"]:
        raise ConfigError("arena: min bounds must be below max bounds")
    for point_key in ("start", "target"):
        p = resolved[point_key]
        if not (arena["x_min"] <= p["x_mm"] <= arena["x_max"]):
            raise ConfigError(f"{point_key}.x_mm: outside the arena")
        if not (arena["y_min"] <= p["y_mm"] <= arena["y_max"]):
            raise ConfigError(f"{point_key}.y_mm: outside the arena")
    if _require_number(resolved, "sim", "dt_ms") <= 0:
        raise ConfigError("sim.dt_ms: must be positive")
    if _require_number(resolved, "sim", "telemetry_hz") <= 0:
        raise ConfigError("sim.telemetry_hz: must be positive")
    if _require_number(resolved, "density_cell_mm") <= 0:
        raise ConfigError("density_cell_mm: must be positive")


def load_scenario(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> Scenario:
    """Build a scenario from defaults, an optional YAML file, and overrides."""
    raw: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    resolved = _merge(DEFAULT_SCENARIO, raw, "")
    if overrides:
        resolved = _merge(resolved, overrides, "")
    _validate(resolved)
    scenario = Scenario(resolved=resolved)
    # Build every derived object now so field errors surface at load time.
    scenario.navigation_config()
    scenario.response_profile()
    scenario.spontaneous_config()
    scenario.link_model()
    scenario.start_pose()
    scenario.target()
    return scenario


def scenario_from_resolved(resolved: dict[str, Any]) -> Scenario:
    """Rebuild a scenario from an embedded resolved-config dict."""
    merged = _merge(DEFAULT_SCENARIO, resolved, "")
    _validate(merged)
    return Scenario(resolved=merged)
