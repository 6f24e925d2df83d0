"""
Knowledge base of a continual learner and the forward/backward transfer procedures.

The bias a set of source tasks provides is realized as an initialization: a
partially trained source model (one source) or a model fitted to the pooled
source samples (several sources). Selecting a hypothesis inside that bias means
a restricted run on the task at hand: the hidden layer is scaled by
TrainConfig.hidden_lr_factor (frozen by default), the output layer by
TrainConfig.output_lr_factor, and the run is capped at finetune_max_epochs.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

from contrail.environment import (
    Sample,
    TaskSpec,
    derive_seed,
    generate_sample,
    split_sample,
)
from contrail.errors import StateError, TaskLookupError, ValidationError
from contrail.learner import MlpModel, TrainConfig, init_model, r_squared, train

logger = logging.getLogger(__name__)

Direction = Literal["none", "forward", "backward"]

OUTCOME_COLUMNS = [
    "scenario",
    "task",
    "direction",
    "sources",
    "rep",
    "seed",
    "r2_baseline",
    "r2_after",
]


@dataclass(frozen=True)
class KnowledgeEntry:
    partial_model: Optional[MlpModel]
    converged_model: Optional[MlpModel]
    train_sample: Sample
    test_sample: Sample


@dataclass
class KnowledgeBase:
    """Per-task model snapshots and retained samples, in arrival order."""

    entries: dict[str, KnowledgeEntry] = field(default_factory=dict)
    arrival_order: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.arrival_order)

    def __contains__(self, task_id: str) -> bool:
        return task_id in self.entries

    def get(self, task_id: str) -> KnowledgeEntry:
        try:
            return self.entries[task_id]
        except KeyError:
            raise TaskLookupError(f"Unknown task id: {task_id!r}") from None

    def add_task(
        self,
        task_id: str,
        partial_model: Optional[MlpModel],
        train_sample: Sample,
        test_sample: Sample,
    ) -> None:
        if task_id in self.entries:
            raise StateError(f"Task {task_id!r} is already in the knowledge base")
        if partial_model is not None and partial_model.converged:
            raise StateError(f"Task {task_id!r}: stored partial model must not be converged")
        self.entries[task_id] = KnowledgeEntry(partial_model, None, train_sample, test_sample)
        self.arrival_order.append(task_id)
        logger.debug(f"Knowledge base: added task {task_id} ({len(self)} tasks)")

    def set_converged(self, task_id: str, model: MlpModel) -> None:
        """Replace a task's converged snapshot; the partial snapshot is untouched."""
        entry = self.get(task_id)
        self.entries[task_id] = dataclasses.replace(entry, converged_model=model)

    def validate(self) -> None:
        if set(self.arrival_order) != set(self.entries) or len(
            set(self.arrival_order)
        ) != len(self.arrival_order):
            raise StateError("Arrival order and entries disagree")
        for task_id, entry in self.entries.items():
            if entry.partial_model is not None and entry.partial_model.converged:
                raise StateError(f"Task {task_id!r}: partial snapshot marked converged")

    def copy(self) -> KnowledgeBase:
        # entries are frozen, so copying the containers is enough
        return KnowledgeBase(dict(self.entries), list(self.arrival_order))


@dataclass(frozen=True, eq=False)
class TransferOutcome:
    task_id: str
    direction: Direction
    sources_used: tuple[str, ...]
    model: MlpModel
    r2_isolated_baseline: float
    r2_after_transfer: float
    repetition_seed: int
    step: int = 0

    def to_record(self, scenario: str, rep: int) -> dict:
        """Row of the outcome CSV (sources joined by '+')."""
        return {
            "scenario": scenario,
            "task": self.task_id,
            "direction": self.direction,
            "sources": "+".join(self.sources_used),
            "rep": rep,
            "seed": self.repetition_seed,
            "r2_baseline": self.r2_isolated_baseline,
            "r2_after": self.r2_after_transfer,
        }


def init_seed(cfg: TrainConfig, seed: int, *parts) -> int:
    """Initialization seed for a model, mixing in TrainConfig.seed."""
    return derive_seed(seed, cfg.seed, *parts, "init")


def task_splits(
    spec: TaskSpec, seed: int, train_fraction: float = 0.75
) -> tuple[Sample, Sample]:
    """Sample and split a task with seeds derived from (seed, task id)."""
    sample = generate_sample(spec, derive_seed(seed, spec.id, "sample"))
    return split_sample(sample, train_fraction, derive_seed(seed, spec.id, "split"))


def build_knowledge_base(
    specs: Sequence[TaskSpec],
    cfg: TrainConfig,
    seed: int,
    train_fraction: float = 0.75,
) -> KnowledgeBase:
    """Sample, split and partially train each task, in the given order."""
    kb = KnowledgeBase()
    for spec in specs:
        train_part, test_part = task_splits(spec, seed, train_fraction)
        fresh = init_model(cfg.hidden_units, init_seed(cfg, seed, spec.id))
        kb.add_task(spec.id, train(fresh, train_part, cfg, "partial"), train_part, test_part)
    return kb


def isolated_model(
    task_id: str, train_sample: Sample, cfg: TrainConfig, seed: int
) -> MlpModel:
    """Independently initialized, fully trained model for a task."""
    fresh = init_model(cfg.hidden_units, init_seed(cfg, seed, task_id))
    return train(fresh, train_sample, cfg, "full")


def _check_ids(kb: KnowledgeBase, ids: Sequence[str]):
    if not ids:
        raise ValidationError("At least one source task is required")
    for task_id in ids:
        kb.get(task_id)


def select_bias_forward(
    kb: KnowledgeBase,
    source_ids: Sequence[str],
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
) -> MlpModel:
    """
    Model standing for the bias learned from the sources.

    One source: its stored partial model, unchanged. Several: a fresh model
    trained to convergence on the pooled source training samples.
    """
    _check_ids(kb, source_ids)
    if len(source_ids) == 1:
        partial = kb.get(source_ids[0]).partial_model
        if partial is None:
            raise StateError(f"Task {source_ids[0]!r} has no partial model")
        return partial
    pooled = [kb.get(task_id).train_sample for task_id in source_ids]
    fresh = init_model(cfg.hidden_units, init_seed(cfg, seed, "bias", *source_ids))
    return train(fresh, pooled, cfg, "full")


def _forward(
    kb: KnowledgeBase,
    source_ids: Sequence[str],
    target: TaskSpec,
    cfg: TrainConfig,
    seed: int,
    splits: tuple[Sample, Sample],
    baseline: MlpModel,
    step: int,
) -> TransferOutcome:
    test_part = splits[1]
    bias = select_bias_forward(kb, source_ids, cfg, seed)
    transferred = train(bias, splits[0], cfg, "full", restricted=True)
    outcome = TransferOutcome(
        task_id=target.id,
        direction="forward",
        sources_used=tuple(source_ids),
        model=transferred,
        r2_isolated_baseline=r_squared(baseline, test_part).r2,
        r2_after_transfer=r_squared(transferred, test_part).r2,
        repetition_seed=seed,
        step=step,
    )
    logger.debug(
        f"Forward {'+'.join(source_ids)} -> {target.id}: R2 {outcome.r2_after_transfer:.4f} "
        f"(isolated {outcome.r2_isolated_baseline:.4f})"
    )
    return outcome


def _register(
    kb: KnowledgeBase,
    target: TaskSpec,
    cfg: TrainConfig,
    seed: int,
    splits: tuple[Sample, Sample],
    baseline: MlpModel,
    transferred: MlpModel,
):
    train_part, test_part = splits
    fresh = init_model(cfg.hidden_units, init_seed(cfg, seed, target.id))
    # same init and data as the baseline, so its epoch count is the full-run length
    partial = train(fresh, train_part, cfg, "partial", full_run_epochs=baseline.epochs_trained)
    kb.add_task(target.id, partial, train_part, test_part)
    kb.set_converged(target.id, transferred)


def forward_transfer(
    kb: KnowledgeBase,
    source_ids: Sequence[str],
    target: TaskSpec,
    cfg: TrainConfig,
    seed: int,
    train_fraction: float = 0.75,
    register: bool = True,
) -> TransferOutcome:
    """
    Learn `target` starting from the bias of `source_ids`.

    The isolated baseline is trained on the same splits. With `register`, the
    target joins the knowledge base with a partial model trained from scratch.
    """
    _check_ids(kb, source_ids)
    splits = task_splits(target, seed, train_fraction)
    baseline = isolated_model(target.id, splits[0], cfg, seed)
    outcome = _forward(kb, source_ids, target, cfg, seed, splits, baseline, step=0)
    if register:
        _register(kb, target, cfg, seed, splits, baseline, outcome.model)
    return outcome


def forward_transfer_at_times(
    kb: KnowledgeBase,
    target: TaskSpec,
    times: Sequence[int],
    cfg: TrainConfig,
    seed: int,
    train_fraction: float = 0.75,
) -> list[TransferOutcome]:
    """
    Forward transfer using the first n tasks of the arrival order, per checkpoint.

    Checkpoints must be non-decreasing; a repeated checkpoint yields the same
    outcome as its first occurrence. Checkpoints share the target splits and
    baseline; the target is registered once, after the last checkpoint.
    """
    if not times:
        raise ValidationError("At least one checkpoint is required")
    if any(later < earlier for earlier, later in zip(times, times[1:])):
        raise ValidationError(f"Checkpoints must be non-decreasing, got {list(times)}")
    for n in times:
        if not 1 <= n <= len(kb):
            raise ValidationError(
                f"Checkpoint {n} outside 1..{len(kb)} (knowledge base size)"
            )
    splits = task_splits(target, seed, train_fraction)
    baseline = isolated_model(target.id, splits[0], cfg, seed)
    by_size: dict[int, TransferOutcome] = {}
    outcomes = []
    for step, n in enumerate(times):
        if n not in by_size:
            by_size[n] = _forward(
                kb, kb.arrival_order[:n], target, cfg, seed, splits, baseline, step
            )
        outcomes.append(dataclasses.replace(by_size[n], step=step))
    _register(kb, target, cfg, seed, splits, baseline, outcomes[-1].model)
    return outcomes


def _backward_step(
    kb: KnowledgeBase,
    source_id: str,
    pool_ids: Sequence[str],
    cfg: TrainConfig,
    seed: int,
    baseline: MlpModel,
    step: int,
) -> TransferOutcome:
    source = kb.get(source_id)
    if source.partial_model is None:
        raise StateError(f"Task {source_id!r} has no partial model to transfer back into")
    pooled = [source.train_sample] + [kb.get(t).train_sample for t in pool_ids]
    auxiliary = train(source.partial_model, pooled, cfg, "full")
    refined = train(auxiliary, source.train_sample, cfg, "full", restricted=True)
    kb.set_converged(source_id, refined)
    outcome = TransferOutcome(
        task_id=source_id,
        direction="backward",
        sources_used=tuple(pool_ids),
        model=refined,
        r2_isolated_baseline=r_squared(baseline, source.test_sample).r2,
        r2_after_transfer=r_squared(refined, source.test_sample).r2,
        repetition_seed=seed,
        step=step,
    )
    logger.debug(
        f"Backward {'+'.join(pool_ids)} -> {source_id}: R2 {outcome.r2_after_transfer:.4f} "
        f"(isolated {outcome.r2_isolated_baseline:.4f})"
    )
    return outcome


def backward_transfer(
    kb: KnowledgeBase,
    source_id: str,
    target_id: str,
    cfg: TrainConfig,
    seed: int,
) -> TransferOutcome:
    """
    Refine `source_id` with knowledge from the newer task `target_id`.

    An auxiliary model starts from the source's partial model and is trained
    on the pooled source+target samples; it is then fine-tuned on the source
    alone as a restricted run.
    """
    return sequential_backward(kb, source_id, [target_id], cfg, seed)[0]


def sequential_backward(
    kb: KnowledgeBase,
    source_id: str,
    target_ids: Sequence[str],
    cfg: TrainConfig,
    seed: int,
) -> list[TransferOutcome]:
    """One backward step per target; step k pools the source with targets[:k+1]."""
    if not target_ids:
        return []
    source = kb.get(source_id)
    for task_id in target_ids:
        kb.get(task_id)
    if source.partial_model is None:
        raise StateError(f"Task {source_id!r} has no partial model to transfer back into")
    baseline = isolated_model(source_id, source.train_sample, cfg, seed)
    return [
        _backward_step(kb, source_id, target_ids[: k + 1], cfg, seed, baseline, step=k)
        for k in range(len(target_ids))
    ]
