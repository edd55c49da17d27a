"""Command-line interface: nav-run, gap-montecarlo, stim-dump, analyze, serve.

Exit codes: 0 success, 2 usage/configuration errors (missing files, invalid
parameters, unknown profiles, busy ports).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .gap import CalibrationError, load_calibration
from .runner import (
    analyze_gap_runs,
    render_analysis_text,
    run_gap_experiment,
    run_nav_experiment,
)
from .scenario import ConfigError, load_scenario
from .stim import (
    Channel,
    DacModel,
    InvalidCommandError,
    StimulusCommand,
    build_pulse_train,
    render_dense,
)

EXIT_OK = 0
EXIT_USAGE = 2


def _load_scenario_or_fail(path: str | None, overrides: dict) -> "object":
    try:
        return load_scenario(path, overrides)
    except FileNotFoundError:
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


def cmd_nav_run(args: argparse.Namespace) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    scenario = _load_scenario_or_fail(args.config, overrides)
    result = run_nav_experiment(scenario, out_dir=args.out_dir)
    summary = result.summary
    rate = summary["success_rate"]
    mean_t = summary["mean_time_to_goal_s"]
    print(f"trials: {summary['n_trials']}  successes: {summary['n_success']}")
    print(f"success_rate: {rate if rate is not None else 'n/a'}")
    print(f"mean_time_to_goal_s: {mean_t if mean_t is not None else 'n/a'}")
    if result.out_dir is not None:
        print(f"artifacts: {result.out_dir}")
    return EXIT_OK


def cmd_gap_montecarlo(args: argparse.Namespace) -> int:
    try:
        profiles = load_calibration(args.calibration)
    except (FileNotFoundError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    names = args.profile or list(profiles)
    unknown = [n for n in names if n not in profiles]
    if unknown:
        print(
            f"error: unknown profile(s) {unknown}; available: {sorted(profiles)}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    trial_csvs = {}
    for name in names:
        result = run_gap_experiment(
            profiles[name], n=args.trials, seed=args.seed, out_dir=args.out_dir
        )
        t = result.summary_dict["tunnel"]
        print(
            f"{name}: trials={args.trials} tunnel={t['successes']}/{t['attempts']} "
            f"({t['success_rate']:.3f}) terminals={result.summary_dict['terminal_counts']}"
        )
        if result.out_dir is not None:
            trial_csvs[name] = result.out_dir / f"gap_{name}_trials.csv"
    if args.analyze:
        if len(names) < 2:
            print("error: --analyze needs at least two profiles", file=sys.stderr)
            return EXIT_USAGE
        if not trial_csvs:
            print("error: --analyze requires --out-dir", file=sys.stderr)
            return EXIT_USAGE
        report = analyze_gap_runs(trial_csvs)
        text = render_analysis_text(report)
        print(text, end="")
        if args.out_dir is not None:
            out = Path(args.out_dir)
            (out / "analysis.json").write_text(json.dumps(report, indent=2, sort_keys=True))
            (out / "analysis.txt").write_text(text)
    return EXIT_OK


def cmd_stim_dump(args: argparse.Namespace) -> int:
    dac = DacModel()
    try:
        cmd = StimulusCommand(
            channels=frozenset({Channel[args.channel.upper()]}),
            amplitude_v=args.amplitude,
            pulse_width_ms=args.width,
            duration_ms=args.duration,
            inter_pulse_gap_ms=args.gap,
        )
        train = build_pulse_train(cmd, dac)
    except (InvalidCommandError, KeyError) as exc:
        print(f"error: invalid stimulus parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("time_ms,code,voltage_v")
    for t, code, voltage in render_dense(train, dac, sample_period_ms=args.sample_period):
        print(f"{t!r},{code},{voltage!r}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    trial_csvs = {}
    for spec in args.trials_csv:
        if "=" not in spec:
            print(f"error: expected NAME=PATH, got {spec!r}", file=sys.stderr)
            return EXIT_USAGE
        name, path = spec.split("=", 1)
        if not Path(path).exists():
            print(f"error: file not found: {path}", file=sys.stderr)
            return EXIT_USAGE
        trial_csvs[name] = path
    try:
        report = analyze_gap_runs(trial_csvs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = render_analysis_text(report)
    print(text, end="")
    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        (out / "analysis.txt").write_text(text)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.time_scale is not None:
        overrides["time_scale"] = args.time_scale
    scenario = _load_scenario_or_fail(args.config, overrides)
    from .service import BridgeServer

    server = BridgeServer(scenario, host=args.host, port=args.port)

    def banner() -> None:
        print(f"serving scenario on ws://{args.host}:{args.port} "
              f"(seed {scenario.seed}, time_scale {scenario.time_scale})", flush=True)

    try:
        asyncio.run(server.run(duration_s=args.duration, on_started=banner))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roachpilot",
        description="Simulated cyborg-insect control stack: navigation trials, "
        "gap-negotiation Monte Carlo, stimulation waveform dumps, and a live "
        "teleoperation bridge.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    nav = sub.add_parser("nav-run", help="run seeded closed-loop navigation trials")
    nav.add_argument("--config", help="scenario YAML (defaults built in)")
    nav.add_argument("--seed", type=int, help="override the scenario seed")
    nav.add_argument("--trials", type=int, help="override the trial count")
    nav.add_argument("--out-dir", help="write per-trial CSVs, density grid, summary JSON")
    nav.set_defaults(func=cmd_nav_run)

    gap = sub.add_parser("gap-montecarlo", help="Monte Carlo gap negotiation")
    gap.add_argument("--profile", action="append",
                     help="arrangement profile (repeatable; default: all)")
    gap.add_argument("--trials", "-n", type=int, default=10_000)
    gap.add_argument("--seed", type=int, default=0)
    gap.add_argument("--calibration", help="calibration YAML (bundled default)")
    gap.add_argument("--out-dir", help="write per-trial CSV and summary JSON")
    gap.add_argument("--analyze", action="store_true",
                     help="run the cross-profile chi-square/ANOVA report")
    gap.set_defaults(func=cmd_gap_montecarlo)

    stim = sub.add_parser("stim-dump", help="dump a pulse train as CSV on stdout")
    stim.add_argument("--amplitude", type=float, default=2.5, help="per-phase volts")
    stim.add_argument("--width", type=float, default=12.0, help="pulse width ms")
    stim.add_argument("--duration", type=float, default=400.0, help="train budget ms")
    stim.add_argument("--gap", type=float, default=0.0, help="inter-pulse gap ms")
    stim.add_argument("--channel", default="cerci",
                      choices=[c.name.lower() for c in Channel])
    stim.add_argument("--sample-period", type=float, default=1.0)
    stim.set_defaults(func=cmd_stim_dump)

    analyze = sub.add_parser("analyze", help="chi-square/ANOVA over gap trial CSVs")
    analyze.add_argument("trials_csv", nargs="+", metavar="NAME=PATH",
                         help="per-profile trial CSVs from gap-montecarlo")
    analyze.add_argument("--out-dir")
    analyze.set_defaults(func=cmd_analyze)

    serve = sub.add_parser("serve", help="live telemetry/command bridge (WebSocket)")
    serve.add_argument("--config", help="scenario YAML (defaults built in)")
    serve.add_argument("--seed", type=int)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8787)
    serve.add_argument("--time-scale", type=float,
                       help="real-time factor; 0 runs unpaced")
    serve.add_argument("--duration", type=float,
                       help="stop after this many wall-clock seconds")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
