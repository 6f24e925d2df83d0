"""
Experiment orchestration for the six transfer scenarios and the isolated baselines.

Every repetition gets its own seed derived from (base_seed, scenario id,
repetition), builds a fresh knowledge base and dispatches to the transfer
procedure of its scenario. Repetitions can run on a process pool; results are
merged by repetition index so output never depends on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

import numpy as np
import pandas as pd

from contrail.config import ExperimentConfig, get_worker_count
from contrail.environment import (
    FunctionSpec,
    NoiseModel,
    Sample,
    TaskSpec,
    derive_seed,
    generate_sample,
)
from contrail.errors import ContrailError, ReportIOError, TaskLookupError, ValidationError
from contrail.learner import MlpModel, init_model, r_squared, train
from contrail.reporting import COMBINED_TASK, SummaryRow, emit_plot_data, emit_report
from contrail.transfer import (
    OUTCOME_COLUMNS,
    TransferOutcome,
    backward_transfer,
    build_knowledge_base,
    forward_transfer,
    forward_transfer_at_times,
    init_seed,
    isolated_model,
    sequential_backward,
    task_splits,
)

logger = logging.getLogger(__name__)

ScenarioDirection = Literal[
    "none", "forward", "backward", "sequential_forward", "sequential_backward"
]

COMBINED_OF = ("f1", "f2", "f3")


def builtin_tasks(noise_enabled: bool = True, sample_size: int = 30) -> list[TaskSpec]:
    """The four tasks of the experiment; f1..f3 are linear and related, f4 is not."""
    noise = NoiseModel(mean=1.0, std=2.0, enabled=noise_enabled)
    functions = {
        "f1": FunctionSpec("linear", -3.0, 10.0),
        "f2": FunctionSpec("linear", -3.0, -5.0),
        "f3": FunctionSpec("linear", -6.0, -12.0),
        "f4": FunctionSpec("quadratic"),
    }
    return [
        TaskSpec(task_id, function, noise, 0.0, 10.0, sample_size)
        for task_id, function in functions.items()
    ]


@dataclass(frozen=True)
class ScenarioSpec:
    """
    One row of the results table.

    `source_ids` are the tasks knowledge flows from and `target_id` the task it
    flows into, whatever the direction. For backward scenarios the target is
    the older task, so it arrives in the knowledge base first.
    """

    id: str
    label: str
    description: str
    source_ids: tuple[str, ...]
    target_id: Optional[str]
    direction: ScenarioDirection
    measured_tasks: tuple[str, ...]
    checkpoints: tuple[int, ...] = ()

    @property
    def noisy(self) -> bool:
        return self.id != "iso"


SCENARIOS: dict[str, ScenarioSpec] = {
    spec.id: spec
    for spec in (
        ScenarioSpec(
            "iso", "Isolated learning", "isolated learning, noiseless samples",
            (), None, "none", ("f1", "f2", "f3", "f4"),
        ),
        ScenarioSpec(
            "iso_noise", "Isolated learning (noise)", "isolated learning, noisy samples",
            (), None, "none", ("f1", "f2", "f3", "f4"),
        ),
        ScenarioSpec(
            "s1", "Scenario 1", "forward transfer f1 -> f2",
            ("f1",), "f2", "forward", ("f2",),
        ),
        ScenarioSpec(
            "s2", "Scenario 2", "backward transfer f2 -> f1",
            ("f2",), "f1", "backward", ("f1",),
        ),
        ScenarioSpec(
            "s3", "Scenario 3", "forward transfer f1, f2 -> f3 (checkpoints after 1 and 2 sources)",
            ("f1", "f2"), "f3", "sequential_forward", ("f3",), checkpoints=(1, 2),
        ),
        ScenarioSpec(
            "s4", "Scenario 4", "sequential backward transfer f2 then f3 -> f1",
            ("f2", "f3"), "f1", "sequential_backward", ("f1",),
        ),
        ScenarioSpec(
            "s5", "Scenario 5", "forward transfer f1 -> f4 (unrelated)",
            ("f1",), "f4", "forward", ("f4",),
        ),
        ScenarioSpec(
            "s6", "Scenario 6", "backward transfer f4 -> f1 (unrelated)",
            ("f4",), "f1", "backward", ("f1",),
        ),
    )
}


def get_scenario(scenario_id: str) -> ScenarioSpec:
    try:
        return SCENARIOS[scenario_id]
    except KeyError:
        known = ", ".join(SCENARIOS)
        raise TaskLookupError(f"Unknown scenario {scenario_id!r} (known: {known})") from None


@dataclass(frozen=True)
class OutcomeRow:
    """A transfer outcome tagged with its scenario and repetition.

    `final` marks the outcome that enters the summary (the last checkpoint
    or sequential step).
    """

    scenario: str
    rep: int
    outcome: TransferOutcome
    final: bool = True

    def to_record(self) -> dict:
        return self.outcome.to_record(self.scenario, self.rep)


def repetition_seed(base_seed: int, scenario_id: str, rep: int) -> int:
    return derive_seed(base_seed, scenario_id, rep)


def _isolated_outcomes(spec: ScenarioSpec, tasks: dict, cfg: ExperimentConfig, seed: int):
    outcomes = []
    for task_id in spec.measured_tasks:
        train_part, test_part = task_splits(tasks[task_id], seed, cfg.train_fraction)
        model = isolated_model(task_id, train_part, cfg.train, seed)
        r2 = r_squared(model, test_part).r2
        outcomes.append(TransferOutcome(task_id, "none", (), model, r2, r2, seed))
    return outcomes


def run_repetition(spec: ScenarioSpec, cfg: ExperimentConfig, rep: int) -> list[OutcomeRow]:
    """Run one repetition of a scenario in isolation from every other run."""
    seed = repetition_seed(cfg.base_seed, spec.id, rep)
    noise = spec.noisy and cfg.noise_enabled
    tasks = {t.id: t for t in builtin_tasks(noise, cfg.sample_size)}
    tcfg, frac = cfg.train, cfg.train_fraction

    if spec.direction == "none":
        outcomes = _isolated_outcomes(spec, tasks, cfg, seed)
        return [OutcomeRow(spec.id, rep, o) for o in outcomes]

    if spec.direction in ("forward", "sequential_forward"):
        kb = build_knowledge_base([tasks[t] for t in spec.source_ids], tcfg, seed, frac)
        target = tasks[spec.target_id]
        if spec.direction == "forward":
            outcomes = [forward_transfer(kb, list(spec.source_ids), target, tcfg, seed, frac)]
        else:
            outcomes = forward_transfer_at_times(kb, target, spec.checkpoints, tcfg, seed, frac)
    else:
        arrival = [spec.target_id, *spec.source_ids]
        kb = build_knowledge_base([tasks[t] for t in arrival], tcfg, seed, frac)
        if spec.direction == "backward":
            outcomes = [backward_transfer(kb, spec.target_id, spec.source_ids[0], tcfg, seed)]
        else:
            outcomes = sequential_backward(kb, spec.target_id, list(spec.source_ids), tcfg, seed)

    last = len(outcomes) - 1
    return [OutcomeRow(spec.id, rep, o, final=(i == last)) for i, o in enumerate(outcomes)]


def _run_repetition(scenario_id: str, rep: int, cfg: ExperimentConfig) -> list[OutcomeRow]:
    # module-level entry point so the process pool can pickle it
    return run_repetition(SCENARIOS[scenario_id], cfg, rep)


def run_scenario(
    spec: ScenarioSpec, cfg: ExperimentConfig, workers: Optional[int] = None
) -> list[OutcomeRow]:
    """All repetitions of one scenario, in repetition order."""
    workers = get_worker_count() if workers is None else workers
    reps = list(range(cfg.repetitions))
    logger.info(f"Scenario {spec.id}: {spec.description}, {len(reps)} repetitions")

    rows: list[OutcomeRow] = []
    rep = 0
    try:
        if workers > 1 and len(reps) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(reps))) as pool:
                results = pool.map(
                    _run_repetition, [spec.id] * len(reps), reps, [cfg] * len(reps)
                )
                for rep in reps:
                    rows.extend(next(results))
        else:
            for rep in reps:
                rows.extend(run_repetition(spec, cfg, rep))
    except ContrailError as e:
        e.add_note(f"scenario {spec.id}, repetition {rep}")
        logger.error(f"Scenario {spec.id} failed at repetition {rep}: {e}")
        raise

    logger.info(f"Scenario {spec.id}: finished ({len(rows)} outcome rows)")
    return rows


def run_scenarios(
    scenario_ids: Iterable[str], cfg: ExperimentConfig, workers: Optional[int] = None
) -> list[OutcomeRow]:
    rows: list[OutcomeRow] = []
    for scenario_id in scenario_ids:
        rows.extend(run_scenario(get_scenario(scenario_id), cfg, workers))
    return rows


def run_all(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[SummaryRow]:
    """Every scenario in table order, summarized."""
    return summarize(run_scenarios(SCENARIOS, cfg, workers))


def _scenario_rank(scenario_id: str) -> int:
    order = list(SCENARIOS)
    return order.index(scenario_id) if scenario_id in order else len(order)


def summarize(rows: Sequence[OutcomeRow]) -> list[SummaryRow]:
    """
    Mean and sample standard deviation of R^2 per (scenario, task).

    Only final outcomes count. Isolated scenarios holding f1, f2 and f3 also get
    a combined row: the mean of the three task means and the standard deviation
    across them.
    """
    final = [row for row in rows if row.final]
    if not final:
        raise ValidationError("Cannot summarize an empty set of outcomes")

    frame = pd.DataFrame(
        {
            "scenario": [row.scenario for row in final],
            "task": [row.outcome.task_id for row in final],
            "rep": [row.rep for row in final],
            "r2": [row.outcome.r2_after_transfer for row in final],
        }
    )
    frame["rank"] = frame["scenario"].map(_scenario_rank)
    # fixed row order so float sums do not depend on input order
    frame = frame.sort_values(["rank", "scenario", "task", "rep"], kind="mergesort")
    stats = frame.groupby(["rank", "scenario", "task"], sort=True)["r2"].agg(
        ["mean", "std", "count"]
    )

    summary: list[SummaryRow] = []
    for (_, scenario, task), group in stats.iterrows():
        count = int(group["count"])
        degenerate = count < 2
        if degenerate:
            logger.warning(
                f"{scenario}/{task}: single repetition, standard deviation reported as 0"
            )
        summary.append(
            SummaryRow(
                scenario=scenario,
                task=task,
                r2_mean=float(group["mean"]),
                r2_std=0.0 if degenerate else float(group["std"]),
                repetitions=count,
                degenerate=degenerate,
            )
        )
    return _with_combined(summary)


def _with_combined(summary: list[SummaryRow]) -> list[SummaryRow]:
    out: list[SummaryRow] = []
    for scenario in dict.fromkeys(row.scenario for row in summary):
        group = [row for row in summary if row.scenario == scenario]
        out.extend(group)
        spec = SCENARIOS.get(scenario)
        means = {row.task: row.r2_mean for row in group}
        if spec is None or spec.direction != "none" or not set(COMBINED_OF) <= set(means):
            continue
        values = np.array([means[t] for t in COMBINED_OF])
        out.append(
            SummaryRow(
                scenario=scenario,
                task=COMBINED_TASK,
                r2_mean=float(values.mean()),
                r2_std=float(values.std(ddof=1)),
                repetitions=min(row.repetitions for row in group if row.task in COMBINED_OF),
            )
        )
    return out


def write_outcomes_csv(rows: Sequence[OutcomeRow], path: str | Path) -> Path:
    """Raw per-repetition outcomes, one line per outcome (checkpoints included)."""
    path = Path(path)
    frame = pd.DataFrame([row.to_record() for row in rows], columns=OUTCOME_COLUMNS)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.10f", lineterminator="\n")
    except OSError as e:
        raise ReportIOError(f"Cannot write outcomes to {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} outcome rows to {path}")
    return path


def collect_plot_inputs(
    cfg: ExperimentConfig, with_models: bool = False
) -> tuple[list[TaskSpec], list[Sample], Optional[list[MlpModel]]]:
    """Tasks, one sample each and, optionally, a model fitted to each sample."""
    tasks = builtin_tasks(cfg.noise_enabled, cfg.sample_size)
    samples = [
        generate_sample(task, derive_seed(cfg.base_seed, "plot", task.id)) for task in tasks
    ]
    if not with_models:
        return tasks, samples, None
    models = [
        train(
            init_model(
                cfg.train.hidden_units,
                init_seed(cfg.train, cfg.base_seed, "plot", task.id),
            ),
            sample,
            cfg.train,
            "full",
        )
        for task, sample in zip(tasks, samples)
    ]
    return tasks, samples, models


def write_reports(
    summary: Sequence[SummaryRow],
    rows: Sequence[OutcomeRow],
    cfg: ExperimentConfig,
    with_models: bool = False,
) -> list[Path]:
    """Write every configured format into cfg.output_dir."""
    out = cfg.output_dir
    written = []
    if "csv" in cfg.formats:
        written.append(emit_report(summary, "csv", out / "summary.csv"))
        written.append(write_outcomes_csv(rows, out / "outcomes.csv"))
    if "markdown" in cfg.formats:
        written.append(emit_report(summary, "markdown", out / "summary.md"))
    if "plotdata" in cfg.formats:
        tasks, samples, models = collect_plot_inputs(cfg, with_models)
        written.extend(emit_plot_data(tasks, samples, models, out / "plotdata"))
    return written


def mean_r2(rows: Sequence[OutcomeRow], scenario: str, step: Optional[int] = None) -> float:
    """Mean R^2 after transfer over a scenario's outcomes (final ones unless `step` is given)."""
    picked = [
        row.outcome.r2_after_transfer
        for row in rows
        if row.scenario == scenario
        and (row.final if step is None else row.outcome.step == step)
    ]
    if not picked:
        raise ValidationError(f"No outcomes for scenario {scenario!r}")
    return math.fsum(picked) / len(picked)
