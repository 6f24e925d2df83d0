"""
Command-line interface.

Subcommands: tasks, run, bounds, plotdata, gradcheck. Exit codes: 0 success,
1 invalid input, 2 runtime/training failure, 3 file I/O failure.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from contrail.bounds import BOUND_REGISTRY, CSV_HEADER, evaluate_named
from contrail.config import ExperimentConfig, get_log_level, load_config
from contrail.errors import ContrailError, ValidationError
from contrail.harness import (
    SCENARIOS,
    builtin_tasks,
    collect_plot_inputs,
    run_scenarios,
    summarize,
    write_reports,
)
from contrail.learner import run_gradient_check
from contrail.reporting import emit_plot_data, render_markdown

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(timezone)s - %(name)s - %(levelname)s - %(message)s"


class TimezoneFormatter(logging.Formatter):
    def format(self, record):
        record.timezone = time.strftime("%Z %z", time.localtime(record.created))
        return super().format(record)


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Root logger on stderr (plus an optional file), timezone-stamped."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else get_log_level(),
        handlers=handlers,
        force=True,
    )
    for handler in logging.getLogger().handlers:
        handler.setFormatter(TimezoneFormatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contrail", description="Continual learning transfer simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--log-file", help="also write the log to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("tasks", help="print the built-in task specs")

    run = sub.add_parser("run", help="run scenarios and write reports")
    run.add_argument("--scenario", default="all", choices=["all", *SCENARIOS])
    run.add_argument("--config", type=Path, help="key = value configuration file")
    run.add_argument("--reps", type=int, help="repetitions per scenario")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--no-noise", action="store_true", help="disable label noise")
    run.add_argument("--out", type=Path, help="output directory")
    run.add_argument("--with-models", action="store_true", help="add model curves to plot data")

    bounds = sub.add_parser("bounds", help="evaluate a bound formula")
    bounds.add_argument("name", choices=sorted(BOUND_REGISTRY))
    bounds.add_argument(
        "--param", type=_key_value, action="append", default=[], metavar="KEY=VALUE"
    )
    bounds.add_argument(
        "--format",
        choices=["text", "csv", "both"],
        default="both",
        help="key=value block, CSV row (with header) or both",
    )

    plot = sub.add_parser("plotdata", help="write curve and sample data for each task")
    plot.add_argument("--out", type=Path, required=True)
    plot.add_argument("--with-models", action="store_true")
    plot.add_argument("--config", type=Path)
    plot.add_argument("--seed", type=int)
    plot.add_argument("--no-noise", action="store_true")

    grad = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    grad.add_argument("--trials", type=int, default=100)
    grad.add_argument("--seed", type=int, default=0)
    return parser


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    return cfg.with_overrides(
        repetitions=getattr(args, "reps", None),
        base_seed=args.seed,
        output_dir=args.out,
        noise_enabled=False if args.no_noise else None,
    )


def cmd_tasks(args) -> int:
    for task in builtin_tasks():
        noise = task.noise
        print(
            f"{task.id}: {task.function.describe()}, x in [{task.domain_lo:g}, {task.domain_hi:g}], "
            f"n={task.sample_size}, noise N({noise.mean:g}, {noise.std:g}^2)"
        )
    return 0


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    ids = list(SCENARIOS) if args.scenario == "all" else [args.scenario]
    rows = run_scenarios(ids, cfg)
    summary = summarize(rows)
    for path in write_reports(summary, rows, cfg, with_models=args.with_models):
        print(path)
    print(render_markdown(summary), end="")
    return 0


def cmd_bounds(args) -> int:
    report = evaluate_named(args.name, dict(args.param))
    if args.format in ("text", "both"):
        print(report.as_text_block())
    if args.format in ("csv", "both"):
        print(CSV_HEADER)
        print(report.as_csv_row())
    return 0


def cmd_plotdata(args) -> int:
    cfg = _experiment_config(args)
    tasks, samples, models = collect_plot_inputs(cfg, args.with_models)
    for path in emit_plot_data(tasks, samples, models, cfg.output_dir):
        print(path)
    return 0


def cmd_gradcheck(args) -> int:
    result = run_gradient_check(trials=args.trials, seed=args.seed)
    print(result["message"])
    return 2 if result["error"] else 0


COMMANDS = {
    "tasks": cmd_tasks,
    "run": cmd_run,
    "bounds": cmd_bounds,
    "plotdata": cmd_plotdata,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as e:
        parser.print_usage(sys.stderr)
        print(f"contrail: error: {e}", file=sys.stderr)
        return e.exit_code

    configure_logging(args.verbose, args.log_file)
    try:
        return COMMANDS[args.command](args)
    except ContrailError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"contrail: error: {e}", file=sys.stderr)
        for note in getattr(e, "__notes__", []):
            print(f"  ({note})", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
