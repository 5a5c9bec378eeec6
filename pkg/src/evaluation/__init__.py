# src/evaluation/__init__.py
"""
Evaluation - Rollout harness, paired comparisons, plots and summaries.
"""

from .harness import (
    EvalConfig,
    EvalReport,
    MushinessTrace,
    TrialRecord,
    mushiness_trace,
    rollout,
    run_trials,
    wilson_interval,
)
from .plots import build_trace_figure, write_trace_plots
from .report import (
    ROBOT_REFERENCE,
    CompressionComparison,
    UnpairedReportsError,
    compression_comparison,
    delicate_gap,
    format_comparison,
    format_report,
    write_tables,
)
from .summary import summarize

__all__ = [
    # Harness
    "EvalConfig", "EvalReport", "MushinessTrace", "TrialRecord",
    "mushiness_trace", "rollout", "run_trials", "wilson_interval",

    # Report
    "ROBOT_REFERENCE", "CompressionComparison", "UnpairedReportsError",
    "compression_comparison", "delicate_gap", "format_comparison", "format_report", "write_tables",

    # Plots and summaries
    "build_trace_figure", "write_trace_plots", "summarize",
]
