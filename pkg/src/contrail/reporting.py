"""
Report rendering: summary CSV, the results grid in markdown, and plot data.

All writers produce byte-stable output for a given input (fixed column order,
fixed float formats, `\\n` line endings).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd

from contrail.environment import Sample, TaskSpec
from contrail.errors import ReportIOError, ValidationError
from contrail.learner import MlpModel, predict

logger = logging.getLogger(__name__)

ReportFormat = Literal["csv", "markdown"]

COMBINED_TASK = "f1,f2,f3"
GRID_TASKS = ("f1", "f2", "f3", "f4", COMBINED_TASK)
SUMMARY_COLUMNS = ["scenario", "task", "r2_mean", "r2_std", "repetitions"]
PLOT_GRID_POINTS = 200
NOT_APPLICABLE = "--"

# Row labels of the markdown grid, in table order
ROW_LABELS = {
    "iso": "Isolated learning",
    "iso_noise": "Isolated learning (noise)",
    "s1": "Scenario 1",
    "s2": "Scenario 2",
    "s3": "Scenario 3",
    "s4": "Scenario 4",
    "s5": "Scenario 5",
    "s6": "Scenario 6",
}


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    task: str
    r2_mean: float
    r2_std: float
    repetitions: int
    degenerate: bool = False

    def __post_init__(self):
        if self.r2_std < 0:
            raise ValidationError(f"{self.scenario}/{self.task}: negative std {self.r2_std}")


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.4f}±{std:.4f}"


def summary_frame(summary: Sequence[SummaryRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [[row.scenario, row.task, row.r2_mean, row.r2_std, row.repetitions] for row in summary],
        columns=SUMMARY_COLUMNS,
    )


def render_csv(summary: Sequence[SummaryRow]) -> str:
    return summary_frame(summary).to_csv(index=False, float_format="%.4f", lineterminator="\n")


def render_markdown(summary: Sequence[SummaryRow]) -> str:
    """Grid with one row per scenario and one column per task; '--' where a cell does not apply."""
    cells: dict[str, dict[str, str]] = {}
    for row in summary:
        cells.setdefault(row.scenario, {})[row.task] = format_cell(row.r2_mean, row.r2_std)

    header = ["Scenario"] + [f"R² {task}" for task in GRID_TASKS]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    ordered = [s for s in ROW_LABELS if s in cells] + sorted(s for s in cells if s not in ROW_LABELS)
    for scenario in ordered:
        values = [cells[scenario].get(task, NOT_APPLICABLE) for task in GRID_TASKS]
        lines.append("| " + " | ".join([ROW_LABELS.get(scenario, scenario)] + values) + " |")

    reps = sorted({row.repetitions for row in summary})
    notes = [
        "",
        f"Mean R² ± sample standard deviation over {', '.join(map(str, reps))} repetition(s); "
        f"{NOT_APPLICABLE} denotes not applicable.",
        f"R² {COMBINED_TASK}: mean of the three per-task means, "
        "standard deviation across those means.",
    ]
    if any(row.degenerate for row in summary):
        notes.append("Cells from a single repetition report a standard deviation of 0.")
    return "\n".join(lines + notes) + "\n"


def emit_report(
    summary: Sequence[SummaryRow], format: ReportFormat, path: str | Path
) -> Path:
    """Write the summary as CSV or markdown."""
    if not summary:
        raise ValidationError("Cannot write a report for an empty summary")
    if format == "csv":
        text = render_csv(summary)
    elif format == "markdown":
        text = render_markdown(summary)
    else:
        raise ValidationError(f"Unknown report format: {format!r}")

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise ReportIOError(f"Cannot write {format} report to {path}: {e}") from e
    logger.info(f"Wrote {format} report to {path}")
    return path


def plot_frame(task: TaskSpec, sample: Sample, model: Optional[MlpModel] = None) -> pd.DataFrame:
    grid = np.linspace(task.domain_lo, task.domain_hi, PLOT_GRID_POINTS)
    frame = pd.concat(
        [
            pd.DataFrame(
                {
                    "kind": "curve",
                    "x": grid,
                    "y_true": task.function.evaluate(grid),
                    "y_noisy_sample": np.nan,
                }
            ),
            pd.DataFrame(
                {
                    "kind": "sample",
                    "x": sample.x,
                    "y_true": task.function.evaluate(sample.x),
                    "y_noisy_sample": sample.y,
                }
            ),
        ],
        ignore_index=True,
    )
    if model is not None:
        frame["y_model"] = predict(model, frame["x"].to_numpy())
    return frame


def emit_plot_data(
    tasks: Sequence[TaskSpec],
    samples: Sequence[Sample],
    models: Optional[Sequence[MlpModel]] = None,
    out_dir: str | Path = "plotdata",
) -> list[Path]:
    """One `plot_<task>.csv` per task: the true curve on a grid plus the sample points."""
    if not tasks:
        raise ValidationError("Plot data needs at least one task")
    if len(samples) != len(tasks) or (models is not None and len(models) != len(tasks)):
        raise ValidationError("tasks, samples and models must line up one to one")

    out_dir = Path(out_dir)
    paths = []
    for i, task in enumerate(tasks):
        frame = plot_frame(task, samples[i], None if models is None else models[i])
        path = out_dir / f"plot_{task.id}.csv"
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        except OSError as e:
            raise ReportIOError(f"Cannot write plot data to {path}: {e}") from e
        paths.append(path)
    logger.info(f"Wrote plot data for {len(paths)} task(s) to {out_dir}")
    return paths
