"""Batch runners and artifact writers for navigation and gap experiments.

Every artifact embeds the resolved config and seed in ``#``-prefixed header
lines (CSV) or a ``config`` field (JSON). The CSV body below the headers is a
pure function of the embedded values, so re-running with them reproduces the
body byte for byte. Floats are written with ``repr`` (shortest round-trip
form) to keep the bodies stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .gap import ArrangementProfile, GapOutcome, GapSummary, monte_carlo
from .navigation import NavigationSession, TrialRecord, run_trials
from .scenario import Scenario
from .stats import chi_square, chi_square_posthoc, descriptive, one_way_anova

FORMAT_VERSION = 1

NAV_TRIAL_COLUMNS = (
    "tick,t_ms,x_mm,y_mm,heading_deg,forward_velocity_mms,turning_velocity_dps,decision"
)
GAP_TRIAL_COLUMNS = "trial,terminal,traversal_time_s,elapsed_s,path"


def _fmt(value: float) -> str:
    return repr(float(value))


def _header_lines(kind: str, config_json: str, seed: int) -> list[str]:
    return [
        f"# roachpilot {kind} v{FORMAT_VERSION}",
        f"# config: {config_json}",
        f"# seed: {seed}",
    ]


def read_embedded_config(path: str | Path) -> dict[str, Any]:
    """Parse the resolved config embedded in an artifact's header lines."""
    for line in Path(path).read_text().splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
        if not line.startswith("#"):
            break
    raise ValueError(f"{path}: no embedded config header found")


def csv_body(path: str | Path) -> str:
    """Artifact content below the comment headers (the reproducible part)."""
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Navigation runs
# ---------------------------------------------------------------------------

def nav_trial_csv(record: TrialRecord, config_json: str, trial_index: int) -> str:
    lines = _header_lines("nav-trial", config_json, record.seed)
    lines.append(f"# trial: {trial_index}")
    lines.append(NAV_TRIAL_COLUMNS)
    for p in record.trajectory:
        lines.append(
            f"{p.tick},{_fmt(p.t_ms)},{_fmt(p.x_mm)},{_fmt(p.y_mm)},"
            f"{_fmt(p.heading_deg)},{_fmt(p.forward_velocity)},"
            f"{_fmt(p.turning_velocity)},{p.decision}"
        )
    return "\n".join(lines) + "\n"


def density_grid(
    records: Iterable[TrialRecord], arena: dict[str, float], cell_mm: float
) -> np.ndarray:
    nx = max(1, int(math.ceil((arena["x_max"] - arena["x_min"]) / cell_mm)))
    ny = max(1, int(math.ceil((arena["y_max"] - arena["y_min"]) / cell_mm)))
    grid = np.zeros((ny, nx), dtype=np.int64)
    for record in records:
        for p in record.trajectory:
            ix = int((p.x_mm - arena["x_min"]) // cell_mm)
            iy = int((p.y_mm - arena["y_min"]) // cell_mm)
            if 0 <= ix < nx and 0 <= iy < ny:
                grid[iy, ix] += 1
    return grid


def density_csv(grid: np.ndarray, config_json: str, seed: int, cell_mm: float) -> str:
    lines = _header_lines("nav-density", config_json, seed)
    lines.append(f"# cell_mm: {_fmt(cell_mm)}")
    lines.append("# rows are y cells from y_min, columns x cells from x_min")
    for row in grid:
        lines.append(",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


@dataclass
class NavRunResult:
    records: list[TrialRecord]
    summary: dict[str, Any]
    out_dir: Path | None


def run_nav_experiment(scenario: Scenario, out_dir: str | Path | None = None) -> NavRunResult:
    """Run the scenario's seeded trials and write per-trial CSVs plus summary."""
    records = run_trials(
        scenario.trials,
        scenario.target(),
        cfg=scenario.navigation_config(),
        profile=scenario.response_profile(),
        spontaneous=scenario.spontaneous_config(),
        link_model=scenario.link_model(),
        start=scenario.start_pose(),
        base_seed=scenario.seed,
        sim_dt_ms=scenario.sim_dt_ms,
    )
    successes = [r for r in records if r.success]
    times_s = [r.time_to_goal_ms / 1000.0 for r in successes]
    decision_counts: dict[str, int] = {}
    for r in records:
        for key, count in r.decision_counts.items():
            decision_counts[key] = decision_counts.get(key, 0) + count
    summary = {
        "format": f"roachpilot nav-summary v{FORMAT_VERSION}",
        "config": scenario.resolved,
        "seed": scenario.seed,
        "n_trials": len(records),
        "n_success": len(successes),
        "success_rate": (len(successes) / len(records)) if records else None,
        "mean_time_to_goal_s": (sum(times_s) / len(times_s)) if times_s else None,
        "decision_counts": dict(sorted(decision_counts.items())),
        "per_trial": [
            {
                "trial": i,
                "seed": r.seed,
                "status": r.status,
                "success": r.success,
                "time_to_goal_s": (r.time_to_goal_ms / 1000.0) if r.time_to_goal_ms is not None else None,
                "n_decisions": len(r.decisions),
            }
            for i, r in enumerate(records)
        ],
    }
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        config_json = scenario.to_json()
        for i, record in enumerate(records):
            (out_path / f"trial_{i:04d}.csv").write_text(
                nav_trial_csv(record, config_json, i)
            )
        grid = density_grid(records, scenario.arena, scenario.density_cell_mm)
        (out_path / "density.csv").write_text(
            density_csv(grid, config_json, scenario.seed, scenario.density_cell_mm)
        )
        (out_path / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return NavRunResult(records=records, summary=summary, out_dir=out_path)


# ---------------------------------------------------------------------------
# Gap Monte Carlo runs
# ---------------------------------------------------------------------------

def gap_trials_csv(
    outcomes: list[GapOutcome], config_json: str, seed: int
) -> str:
    lines = _header_lines("gap-trials", config_json, seed)
    lines.append(GAP_TRIAL_COLUMNS)
    for i, o in enumerate(outcomes):
        traversal = _fmt(o.traversal_time_s) if o.traversal_time_s is not None else ""
        path = ">".join(s.value for s in o.state_path)
        lines.append(f"{i},{o.terminal.value},{traversal},{_fmt(o.elapsed_s)},{path}")
    return "\n".join(lines) + "\n"


def gap_summary_dict(summary: GapSummary, profile: ArrangementProfile) -> dict[str, Any]:
    stats = summary.traversal_stats()
    ci = summary.success_rate_ci99()
    return {
        "format": f"roachpilot gap-summary v{FORMAT_VERSION}",
        "profile": summary.profile,
        "seed": summary.seed,
        "n_trials": summary.n_trials,
        "terminal_counts": dict(sorted(summary.terminal_counts.items())),
        "edge_counts": summary.edge_counts,
        "tunnel": {
            "attempts": summary.tunnel_attempts,
            "successes": summary.tunnel_successes,
            "success_rate": summary.tunnel_success_rate,
            "ci99": list(ci),
        },
        "traversal": stats,
        "calibration_notes": profile.notes,
    }


@dataclass
class GapRunResult:
    summary: GapSummary
    outcomes: list[GapOutcome]
    summary_dict: dict[str, Any]
    out_dir: Path | None


def run_gap_experiment(
    profile: ArrangementProfile,
    n: int,
    seed: int,
    out_dir: str | Path | None = None,
) -> GapRunResult:
    summary, outcomes = monte_carlo(profile, n=n, seed=seed)
    summary_dict = gap_summary_dict(summary, profile)
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        config_json = json.dumps(
            {"profile": profile.name, "n": n, "seed": seed}, sort_keys=True,
            separators=(",", ":"),
        )
        (out_path / f"gap_{profile.name}_trials.csv").write_text(
            gap_trials_csv(outcomes, config_json, seed)
        )
        (out_path / f"gap_{profile.name}_summary.json").write_text(
            json.dumps(summary_dict, indent=2, sort_keys=True)
        )
    return GapRunResult(
        summary=summary, outcomes=outcomes, summary_dict=summary_dict, out_dir=out_path
    )


# ---------------------------------------------------------------------------
# Cross-profile analysis (chi-square + ANOVA over Monte Carlo outputs)
# ---------------------------------------------------------------------------

def parse_gap_trials_csv(path: str | Path) -> list[dict[str, Any]]:
    rows = []
    lines = [l for l in Path(path).read_text().splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    if header != GAP_TRIAL_COLUMNS.split(","):
        raise ValueError(f"{path}: unexpected columns {header}")
    for line in lines[1:]:
        trial, terminal, traversal, elapsed, path_str = line.split(",")
        rows.append(
            {
                "trial": int(trial),
                "terminal": terminal,
                "traversal_time_s": float(traversal) if traversal else None,
                "elapsed_s": float(elapsed),
                "path": path_str.split(">"),
            }
        )
    return rows


def tunnel_outcomes_from_rows(rows: list[dict[str, Any]]) -> tuple[int, int]:
    """(successes, failures) per tunnel attempt from recorded state paths."""
    successes = failures = 0
    for row in rows:
        path = row["path"]
        for a, b in zip(path, path[1:]):
            if a == "tunnel":
                if b == "pass":
                    successes += 1
                else:
                    failures += 1
    return successes, failures


def analyze_gap_runs(trial_csvs: dict[str, str | Path]) -> dict[str, Any]:
    """Three-group comparison of tunnel success and traversal times.

    ``trial_csvs`` maps profile name -> per-trial CSV written by
    ``run_gap_experiment``. Produces the chi-square test with Bonferroni
    post-hoc pairs plus a one-way ANOVA over passing traversal times.
    """
    from .stats import ContingencyTable

    names = list(trial_csvs)
    if len(names) < 2:
        raise ValueError("need at least two profiles to compare")
    counts = []
    traversal_groups = []
    for name in names:
        rows = parse_gap_trials_csv(trial_csvs[name])
        s, f = tunnel_outcomes_from_rows(rows)
        counts.append((s, f))
        traversal_groups.append(
            [row["traversal_time_s"] for row in rows if row["traversal_time_s"] is not None]
        )
    table = ContingencyTable(
        counts=tuple(counts),
        row_labels=tuple(names),
        col_labels=("success", "failure"),
    )
    overall = chi_square(table)
    pairs = [(i, j) for i in range(len(names)) for j in range(i + 1, len(names))]
    posthoc = chi_square_posthoc(table, pairs)
    anova = one_way_anova(traversal_groups)
    report: dict[str, Any] = {
        "format": f"roachpilot gap-analysis v{FORMAT_VERSION}",
        "profiles": names,
        "tunnel_counts": {n: {"success": c[0], "failure": c[1]} for n, c in zip(names, counts)},
        "chi_square": {
            "statistic": overall.statistic,
            "df": overall.df,
            "p_value": overall.p_value,
        },
        "posthoc": [
            {
                "pair": list(r.labels),
                "statistic": r.raw.statistic,
                "raw_p": r.raw.p_value,
                "adjusted_p": r.adjusted_p,
                "significant_at_0.01": r.adjusted_p < 0.01,
            }
            for r in posthoc
        ],
        "traversal": {
            name: vars(descriptive(group)) if group else None
            for name, group in zip(names, traversal_groups)
        },
        "anova": {
            "statistic": anova.statistic,
            "df": list(anova.df),
            "p_value": anova.p_value,
            "degenerate": anova.degenerate,
        },
    }
    return report


def render_analysis_text(report: dict[str, Any]) -> str:
    lines = ["Gap negotiation analysis", "=" * 40]
    for name, c in report["tunnel_counts"].items():
        total = c["success"] + c["failure"]
        rate = c["success"] / total if total else float("nan")
        lines.append(f"{name:12s} {c['success']:5d}/{total:<6d} tunnel success ({rate:.1%})")
    chi = report["chi_square"]
    lines.append("")
    lines.append(
        f"Pearson chi-square: statistic={chi['statistic']:.4f} df={chi['df']} "
        f"p={chi['p_value']:.3g}"
    )
    lines.append("Post-hoc (Bonferroni-adjusted):")
    for row in report["posthoc"]:
        mark = "*" if row["significant_at_0.01"] else " "
        lines.append(
            f"  {row['pair'][0]} vs {row['pair'][1]:12s} adjusted p={row['adjusted_p']:.3g} {mark}"
        )
    anova = report["anova"]
    lines.append("")
    lines.append(
        f"Traversal one-way ANOVA: F={anova['statistic']:.4f} "
        f"df=({anova['df'][0]},{anova['df'][1]}) p={anova['p_value']:.3g}"
    )
    for name, d in report["traversal"].items():
        if d is None:
            lines.append(f"  {name:12s} no passing trials")
        else:
            lines.append(
                f"  {name:12s} mean={d['mean']:.2f}s sd={d['sd']:.2f} se={d['se']:.2f} n={d['n']}"
            )
    return "\n".join(lines) + "\n"
