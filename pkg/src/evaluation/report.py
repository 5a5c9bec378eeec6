"""
Report - Paired comparisons, reference figures and CSV/text output.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from ..core.logger import get_logger
from ..core.outcome import OutcomeLabel
from .harness import EvalReport

log = get_logger("Report")

# Figures observed on the real robot, printed beside measured ones
ROBOT_REFERENCE = {
    "forceful": {"overall": 0.82, "seen": 0.85, "unseen": 0.80, "null_rate": 0.115, "slip_share": 0.28},
    "position_only": {"overall": 0.54, "seen": 0.45, "unseen": 0.60, "null_rate": 0.20, "slip_share": 0.061},
    "grasp_latency_s": {"policy": 3.75, "expert": 14.11},
}

PAIRING_KEYS = ("trials_per_object", "ticks", "dt", "start_offset_min", "start_offset_max", "max_attempts")


class UnpairedReportsError(ValueError):
    """Raised when two reports were not produced under the same protocol and seed."""


def check_paired(first: EvalReport, second: EvalReport):
    """
    Verify two reports share seed, objects and protocol.

    Raises:
        UnpairedReportsError naming the first difference
    """
    if first.seed != second.seed:
        raise UnpairedReportsError(f"Reports use different seeds ({first.seed} vs {second.seed})")
    names_a = [o["name"] for o in first.objects]
    names_b = [o["name"] for o in second.objects]
    if names_a != names_b:
        raise UnpairedReportsError("Reports cover different object lists")
    for key in PAIRING_KEYS:
        if first.config.get(key) != second.config.get(key):
            raise UnpairedReportsError(
                f"Reports differ in {key} ({first.config.get(key)} vs {second.config.get(key)})"
            )


@dataclass
class CompressionComparison:
    """Per-object final aperture and force of two paired reports."""

    per_object: pd.DataFrame
    traces: pd.DataFrame

    def delicate_share_closing_narrower(self) -> float:
        """Share of delicate objects where the second policy closes at least as far."""
        delicate = self.per_object[self.per_object["delicate"]]
        if delicate.empty:
            return 0.0
        return float((delicate["delta_aperture"] <= 0).mean())


def _order(first: EvalReport, second: EvalReport):
    # Forceful first when the tags say so; otherwise keep the given order
    if first.variant == "position_only" and second.variant != "position_only":
        return second, first
    return first, second


def compression_comparison(first: EvalReport, second: EvalReport) -> CompressionComparison:
    """
    Compare how far two paired policies close on each object.

    delta_aperture is position-only mean final aperture minus forceful mean
    final aperture (negative when position-only squeezes harder). Means skip
    null grasps; objects where every trial was null fall back to all trials.

    Args:
        first: One report (forceful, or any report for self-comparison)
        second: The paired report

    Returns:
        CompressionComparison with per-object deltas and combined traces
    """
    check_paired(first, second)
    forceful, position_only = _order(first, second)

    def means(report: EvalReport) -> pd.DataFrame:
        table = report.table()
        reached = table["label"] != OutcomeLabel.NULL.value
        all_null = ~reached.groupby(table["object"]).transform("any")
        return table[reached | all_null].groupby("object", sort=True).agg(
            delicate=("delicate", "first"),
            seen=("seen", "first"),
            aperture=("final_aperture", "mean"),
            force=("final_applied_force", "mean"),
        )

    a = means(forceful)
    b = means(position_only)
    per_object = pd.DataFrame({
        "delicate": a["delicate"],
        "seen": a["seen"],
        "aperture_forceful": a["aperture"],
        "aperture_position_only": b["aperture"],
        "delta_aperture": b["aperture"] - a["aperture"],
        "force_forceful": a["force"],
        "force_position_only": b["force"],
        "delta_force": b["force"] - a["force"],
    }).reset_index()

    first_traces = forceful.traces().assign(role="forceful")
    second_traces = position_only.traces().assign(role="position_only")
    traces = pd.concat([first_traces, second_traces], ignore_index=True)
    return CompressionComparison(per_object=per_object, traces=traces)


def delicate_gap(forceful: EvalReport, position_only: EvalReport) -> float:
    """Forceful minus position-only success rate on delicate objects, in percentage points."""
    check_paired(forceful, position_only)
    a = forceful.summary()["success"]["delicate"]["rate"]
    b = position_only.summary()["success"]["delicate"]["rate"]
    return 100.0 * (a - b)


def _pct(value: float) -> str:
    return f"{100.0 * value:5.1f}%"


def format_report(report: EvalReport) -> List[str]:
    """
    Human-readable lines for one report, with reference figures.

    Args:
        report: Evaluation report

    Returns:
        Text lines
    """
    summary = report.summary()
    reference = ROBOT_REFERENCE.get(report.variant, {})
    lines = [f"Policy: {report.variant}  (seed {report.seed}, {summary['trials']} trials)"]

    for group in ("overall", "seen", "unseen", "delicate", "robust"):
        stats = summary["success"][group]
        low, high = stats["ci95"]
        ref = reference.get(group)
        ref_text = f"  [robot: {_pct(ref)}]" if ref is not None else ""
        lines.append(
            f"  success {group:<8} {_pct(stats['rate'])} "
            f"({stats['successes']}/{stats['completed']}, 95% CI {_pct(low)}-{_pct(high)}){ref_text}"
        )

    ref_null = reference.get("null_rate")
    lines.append(
        f"  null grasps      {_pct(summary['null_rate'])} ({summary['null_attempts']}/{summary['attempts']} attempts)"
        + (f"  [robot: {_pct(ref_null)}]" if ref_null is not None else "")
    )
    ref_slip = reference.get("slip_share")
    lines.append(
        f"  slip share       {_pct(summary['failure_share']['slip'])} of failures"
        + (f"  [robot: {_pct(ref_slip)}]" if ref_slip is not None else "")
    )
    lines.append(f"  outcome counts   {summary['counts']}")
    latency = ROBOT_REFERENCE["grasp_latency_s"]
    lines.append(
        f"  grasp duration   {summary['grasp_duration_s']:.2f} s simulated  "
        f"[robot: policy {latency['policy']} s, expert {latency['expert']} s]"
    )
    for name, trace in summary["mushiness"].items():
        lines.append(f"  mushiness {name}: -{trace['total_degradation']:.2f} mm over {len(trace['rest_widths'])} grasps")
    return lines


def format_comparison(forceful: EvalReport, position_only: EvalReport) -> List[str]:
    """Lines for a paired forceful / position-only comparison."""
    comparison = compression_comparison(forceful, position_only)
    gap = delicate_gap(*_order(forceful, position_only))
    lines = [
        f"Delicate stratum gap: {gap:+.1f} pp (forceful minus position-only)  [robot overall: +28 pp]",
        f"Delicate objects where position-only closes at least as far: "
        f"{_pct(comparison.delicate_share_closing_narrower())}",
    ]
    for row in comparison.per_object.itertuples(index=False):
        lines.append(
            f"  {row.object:<28} aperture {row.aperture_forceful:6.2f} -> {row.aperture_position_only:6.2f} mm "
            f"(delta {row.delta_aperture:+.2f}), force {row.force_forceful:.2f} -> {row.force_position_only:.2f} N"
        )
    return lines


def write_tables(reports: Sequence[EvalReport], out_dir: Path) -> Dict[str, Path]:
    """
    Write trial, summary and trace CSVs for one or more reports.

    Args:
        reports: Evaluation reports
        out_dir: Output directory (created if missing)

    Returns:
        Mapping of table name to written path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    trials = pd.concat([r.table().assign(policy=r.variant) for r in reports], ignore_index=True)
    traces = pd.concat([r.traces() for r in reports], ignore_index=True)

    summary_rows = []
    for r in reports:
        s = r.summary()
        for group, stats in s["success"].items():
            summary_rows.append({
                "policy": r.variant, "group": group, "success_rate": stats["rate"],
                "successes": stats["successes"], "completed": stats["completed"],
                "ci95_low": stats["ci95"][0], "ci95_high": stats["ci95"][1],
            })
    summary = pd.DataFrame(summary_rows)

    paths = {
        "trials": out_dir / "trials.csv",
        "summary": out_dir / "summary.csv",
        "traces": out_dir / "traces.csv",
    }
    trials.to_csv(paths["trials"], index=False)
    summary.to_csv(paths["summary"], index=False)
    traces.to_csv(paths["traces"], index=False)

    if len(reports) == 2:
        comparison = compression_comparison(reports[0], reports[1])
        paths["compression"] = out_dir / "compression.csv"
        comparison.per_object.to_csv(paths["compression"], index=False)

    log.info(f"Wrote {len(paths)} tables to {out_dir}")
    return paths


def find_pair(reports: Sequence[EvalReport]) -> Optional[tuple]:
    """(forceful, position_only) if both variants are present."""
    by_variant = {r.variant: r for r in reports}
    if "forceful" in by_variant and "position_only" in by_variant:
        return by_variant["forceful"], by_variant["position_only"]
    return None
