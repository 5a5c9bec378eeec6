"""
Plots - Per-object gripper time series.

Forceful policy: gripper position (blue), applied force (green dash) and
contact force (purple dash). Position-only policy: gripper position (red).
The expert baseline, when present, is dotted. Positions use the left axis in mm, forces the right axis in N.
"""

import re
from pathlib import Path
from typing import List

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from ..core.logger import get_logger

log = get_logger("Plots")

SERIES = {
    "forceful": [
        ("gripper_position", "forceful gripper position", "#1f77b4", "solid", False),
        ("applied_force", "forceful applied force", "#2ca02c", "dash", True),
        ("contact_force", "forceful contact force", "#9467bd", "dash", True),
    ],
    "position_only": [
        ("gripper_position", "position-only gripper position", "#d62728", "solid", False),
    ],
    "expert": [
        ("gripper_position", "expert gripper position", "#7f7f7f", "dot", False),
        ("applied_force", "expert applied force", "#bcbd22", "dot", True),
    ],
}


def mean_traces(traces: pd.DataFrame) -> pd.DataFrame:
    """Average every channel over trials, per policy, object and tick."""
    return (
        traces.groupby(["policy", "object", "tick"], sort=True)[
            ["time", "gripper_position", "applied_force", "contact_force"]
        ]
        .mean()
        .reset_index()
    )


def build_trace_figure(traces: pd.DataFrame, object_name: str) -> go.Figure:
    """
    Figure of mean per-tick series for one object.

    Args:
        traces: Per-tick rows with policy, object, tick, time and channels
        object_name: Object to plot

    Returns:
        Plotly figure with a secondary force axis
    """
    data = mean_traces(traces[traces["object"] == object_name])
    fig = make_subplots(specs=[[{"secondary_y": True}]])

    for policy, series in SERIES.items():
        rows = data[data["policy"] == policy]
        if rows.empty:
            continue
        for column, label, color, dash, secondary in series:
            fig.add_trace(
                go.Scatter(
                    x=rows["time"],
                    y=rows[column],
                    name=label,
                    mode="lines",
                    line=dict(color=color, dash=dash),
                ),
                secondary_y=secondary,
            )

    fig.update_layout(
        title=object_name,
        template="plotly_white",
        font=dict(family="Inter, sans-serif", size=12),
        title_font_size=16,
        margin=dict(l=40, r=40, t=60, b=40),
        height=400,
        legend=dict(orientation="h", y=-0.2),
    )
    fig.update_xaxes(title_text="time (s)")
    fig.update_yaxes(title_text="gripper position (mm)", secondary_y=False)
    fig.update_yaxes(title_text="force (N)", secondary_y=True)
    return fig


def _filename(object_name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", object_name.lower()).strip("_") + ".svg"


def write_trace_plots(traces: pd.DataFrame, out_dir: Path) -> List[Path]:
    """
    Export one SVG per object.

    Args:
        traces: Per-tick rows of one or more policies
        out_dir: Output directory (created if missing)

    Returns:
        Written paths in object order
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for object_name in sorted(traces["object"].unique()):
        path = out_dir / _filename(object_name)
        build_trace_figure(traces, object_name).write_image(str(path), format="svg")
        paths.append(path)
    log.info(f"Wrote {len(paths)} plots to {out_dir}")
    return paths
