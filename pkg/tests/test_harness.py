"""
Tests for the experiment harness: built-in tasks, scenarios, repetitions and summaries.
"""

import logging
import random

import pandas as pd
import pytest

from contrail.errors import StateError, TaskLookupError, ValidationError
from contrail.harness import (
    SCENARIOS,
    OutcomeRow,
    builtin_tasks,
    get_scenario,
    mean_r2,
    repetition_seed,
    run_all,
    run_repetition,
    run_scenario,
    run_scenarios,
    summarize,
    write_outcomes_csv,
    write_reports,
)
from contrail.reporting import COMBINED_TASK
from contrail.transfer import OUTCOME_COLUMNS, TransferOutcome


def make_row(factory, scenario, task, r2, rep=0, final=True, step=0, baseline=0.5):
    outcome = TransferOutcome(
        task_id=task,
        direction="forward",
        sources_used=("f1",),
        model=factory.model(),
        r2_isolated_baseline=baseline,
        r2_after_transfer=r2,
        repetition_seed=rep,
        step=step,
    )
    return OutcomeRow(scenario, rep, outcome, final)


@pytest.mark.unit
class TestBuiltinTasks:
    """The four built-in tasks."""

    def test_ids_and_functions(self):
        tasks = {t.id: t for t in builtin_tasks()}
        assert list(tasks) == ["f1", "f2", "f3", "f4"]
        assert tasks["f1"].function.evaluate(0.0) == 10.0
        assert tasks["f2"].function.evaluate(0.0) == -5.0
        assert tasks["f3"].function.evaluate(1.0) == -18.0
        assert tasks["f4"].function.evaluate(3.0) == 9.0

    def test_defaults(self):
        for task in builtin_tasks():
            assert (task.domain_lo, task.domain_hi) == (0.0, 10.0)
            assert task.sample_size == 30
            assert (task.noise.mean, task.noise.std) == (1.0, 2.0)
            assert task.noise.enabled

    def test_noise_switch_and_size(self):
        for task in builtin_tasks(noise_enabled=False, sample_size=12):
            assert not task.noise.enabled
            assert task.sample_size == 12


@pytest.mark.unit
class TestScenarios:
    """Scenario table and seeds."""

    def test_table_order(self):
        assert list(SCENARIOS) == ["iso", "iso_noise", "s1", "s2", "s3", "s4", "s5", "s6"]

    def test_directions(self):
        assert SCENARIOS["s1"].direction == "forward"
        assert SCENARIOS["s2"].direction == "backward"
        assert SCENARIOS["s3"].checkpoints == (1, 2)
        assert SCENARIOS["s4"].source_ids == ("f2", "f3")
        assert SCENARIOS["s6"].source_ids == ("f4",)
        assert SCENARIOS["s6"].target_id == "f1"

    def test_only_iso_is_noiseless(self):
        assert not SCENARIOS["iso"].noisy
        assert all(spec.noisy for key, spec in SCENARIOS.items() if key != "iso")

    def test_unknown_scenario(self):
        with pytest.raises(TaskLookupError, match="known: iso"):
            get_scenario("s9")

    def test_repetition_seeds_distinct(self):
        seeds = {repetition_seed(0, sid, rep) for sid in SCENARIOS for rep in range(10)}
        assert len(seeds) == 80


@pytest.mark.unit
class TestSummarize:
    """Aggregation of outcome rows."""

    def test_mean_and_sample_std(self, factory):
        rows = [make_row(factory, "s1", "f2", 0.9, rep=0), make_row(factory, "s1", "f2", 1.0, rep=1)]
        (row,) = summarize(rows)
        assert row.r2_mean == pytest.approx(0.95)
        assert row.r2_std == pytest.approx(0.0707107, abs=1e-6)
        assert row.repetitions == 2
        assert not row.degenerate

    def test_single_repetition_is_degenerate(self, factory, caplog):
        with caplog.at_level(logging.WARNING, logger="contrail.harness"):
            (row,) = summarize([make_row(factory, "s1", "f2", 0.8)])
        assert row.degenerate
        assert row.r2_std == 0.0
        assert "single repetition" in caplog.text

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            summarize([])

    def test_non_final_rows_ignored(self, factory):
        rows = [
            make_row(factory, "s3", "f3", 0.1, rep=0, final=False, step=0),
            make_row(factory, "s3", "f3", 0.7, rep=0, step=1),
            make_row(factory, "s3", "f3", 0.9, rep=1, step=1),
        ]
        (row,) = summarize(rows)
        assert row.r2_mean == pytest.approx(0.8)
        assert row.repetitions == 2

    def test_permutation_invariant(self, factory):
        rows = [
            make_row(factory, sid, task, 0.1 * k + 0.01 * rep, rep=rep)
            for k, (sid, task) in enumerate([("s1", "f2"), ("iso", "f1"), ("s5", "f4")])
            for rep in range(5)
        ]
        shuffled = list(rows)
        random.Random(3).shuffle(shuffled)
        assert summarize(shuffled) == summarize(rows)

    def test_table_order_of_scenarios(self, factory):
        rows = [make_row(factory, "s2", "f1", 0.5), make_row(factory, "iso", "f1", 0.5)]
        assert [row.scenario for row in summarize(rows)] == ["iso", "s2"]

    def test_combined_row(self, factory):
        means = {"f1": 0.9, "f2": 0.8, "f3": 0.7, "f4": 0.1}
        rows = [
            make_row(factory, "iso_noise", task, value + delta, rep=rep)
            for task, value in means.items()
            for rep, delta in enumerate((-0.01, 0.01))
        ]
        summary = summarize(rows)
        assert [row.task for row in summary] == ["f1", "f2", "f3", "f4", COMBINED_TASK]
        combined = summary[-1]
        assert combined.r2_mean == pytest.approx(0.8)
        assert combined.r2_std == pytest.approx(0.1)
        assert combined.repetitions == 2

    def test_no_combined_row_for_transfer_scenarios(self, factory):
        rows = [make_row(factory, "s1", task, 0.5) for task in ("f1", "f2", "f3")]
        assert COMBINED_TASK not in {row.task for row in summarize(rows)}


@pytest.mark.unit
class TestOutcomeFiles:
    def test_outcomes_csv(self, factory, tmp_path):
        rows = [make_row(factory, "s1", "f2", 0.25, rep=3, baseline=0.125)]
        path = write_outcomes_csv(rows, tmp_path / "out" / "outcomes.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(OUTCOME_COLUMNS)
        assert lines[1] == "s1,f2,forward,f1,3,3,0.1250000000,0.2500000000"

    def test_outcomes_csv_reads_back(self, factory, tmp_path):
        rows = [make_row(factory, "s1", "f2", 0.1 * rep, rep=rep) for rep in range(4)]
        frame = pd.read_csv(write_outcomes_csv(rows, tmp_path / "outcomes.csv"))
        assert list(frame["rep"]) == [0, 1, 2, 3]

    def test_mean_r2(self, factory):
        rows = [
            make_row(factory, "s3", "f3", 0.2, rep=0, final=False, step=0),
            make_row(factory, "s3", "f3", 0.6, rep=0, step=1),
            make_row(factory, "s3", "f3", 0.4, rep=1, final=False, step=0),
            make_row(factory, "s3", "f3", 0.8, rep=1, step=1),
        ]
        assert mean_r2(rows, "s3") == pytest.approx(0.7)
        assert mean_r2(rows, "s3", step=0) == pytest.approx(0.3)
        with pytest.raises(ValidationError):
            mean_r2(rows, "s1")


@pytest.mark.integration
class TestRepetitions:
    """Running scenarios with fast training."""

    def test_iso_is_noiseless_and_reports_every_task(self, small_experiment_config):
        rows = run_repetition(SCENARIOS["iso"], small_experiment_config, 0)
        assert [row.outcome.task_id for row in rows] == ["f1", "f2", "f3", "f4"]
        for row in rows:
            assert row.outcome.direction == "none"
            assert row.outcome.r2_after_transfer == row.outcome.r2_isolated_baseline

    def test_backward_scenario_refines_older_task(self, small_experiment_config):
        (row,) = run_repetition(SCENARIOS["s2"], small_experiment_config, 0)
        assert row.outcome.task_id == "f1"
        assert row.outcome.sources_used == ("f2",)
        assert row.outcome.direction == "backward"

    def test_checkpoint_scenario_marks_final_step(self, small_experiment_config):
        rows = run_repetition(SCENARIOS["s3"], small_experiment_config, 1)
        assert [row.final for row in rows] == [False, True]
        assert [row.outcome.sources_used for row in rows] == [("f1",), ("f1", "f2")]
        assert all(row.rep == 1 for row in rows)

    def test_run_scenario_cardinality(self, small_experiment_config, serial_workers):
        rows = run_scenario(SCENARIOS["s1"], small_experiment_config)
        assert [row.rep for row in rows] == [0, 1]
        assert len(summarize(rows)) == 1

    def test_deterministic(self, small_experiment_config):
        first = run_scenario(SCENARIOS["s5"], small_experiment_config, workers=1)
        second = run_scenario(SCENARIOS["s5"], small_experiment_config, workers=1)
        assert [r.outcome.r2_after_transfer for r in first] == [
            r.outcome.r2_after_transfer for r in second
        ]

    def test_parallel_matches_serial(self, small_experiment_config):
        serial = run_scenario(SCENARIOS["s1"], small_experiment_config, workers=1)
        parallel = run_scenario(SCENARIOS["s1"], small_experiment_config, workers=2)
        assert [(r.rep, r.outcome.r2_after_transfer) for r in serial] == [
            (r.rep, r.outcome.r2_after_transfer) for r in parallel
        ]

    def test_scenario_alone_matches_full_run(self, small_experiment_config):
        (alone,) = summarize(run_scenario(SCENARIOS["s1"], small_experiment_config, workers=1))
        summary = run_all(small_experiment_config, workers=1)
        (within,) = [row for row in summary if row.scenario == "s1"]
        assert (alone.task, alone.repetitions) == (within.task, within.repetitions)
        assert alone.r2_mean == pytest.approx(within.r2_mean, abs=1e-12)
        assert alone.r2_std == pytest.approx(within.r2_std, abs=1e-12)

    def test_seed_changes_results(self, small_experiment_config):
        a = run_scenario(SCENARIOS["s1"], small_experiment_config, workers=1)
        b = run_scenario(
            SCENARIOS["s1"], small_experiment_config.with_overrides(base_seed=8), workers=1
        )
        assert a[0].outcome.r2_after_transfer != b[0].outcome.r2_after_transfer

    def test_failure_is_annotated(self, small_experiment_config, mocker, caplog):
        mocker.patch("contrail.harness.run_repetition", side_effect=StateError("boom"))
        with pytest.raises(StateError) as info:
            run_scenario(SCENARIOS["s1"], small_experiment_config, workers=1)
        assert "scenario s1, repetition 0" in info.value.__notes__
        assert "Scenario s1 failed" in caplog.text

    def test_unknown_id_in_batch(self, small_experiment_config):
        with pytest.raises(TaskLookupError):
            run_scenarios(["s1", "nope"], small_experiment_config.with_overrides(repetitions=1))

    def test_write_reports(self, small_experiment_config):
        cfg = small_experiment_config.with_overrides(
            repetitions=1, formats=frozenset({"csv", "markdown", "plotdata"})
        )
        rows = run_scenario(SCENARIOS["s1"], cfg, workers=1)
        paths = write_reports(summarize(rows), rows, cfg)
        names = sorted(p.name for p in paths)
        assert names == sorted(
            ["summary.csv", "outcomes.csv", "summary.md"] + [f"plot_f{i}.csv" for i in range(1, 5)]
        )
        assert all(p.exists() for p in paths)
        assert (cfg.output_dir / "plotdata" / "plot_f1.csv").exists()
