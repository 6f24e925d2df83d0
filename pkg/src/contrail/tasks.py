#!/usr/bin/env python3
"""
Development task runner for contrail.

Usage:
    python -m contrail.tasks <command>

Available commands:
    test              - Run the suite without the slow experiment checks
    test-unit         - Run unit tests only
    test-property     - Run the hypothesis property suites
    test-integration  - Run integration tests that train networks
    test-slow         - Run the full ten-repetition experiment checks
    test-coverage     - Run the default suite with a coverage report
    lint              - Run ruff check --fix and ruff format
    clean             - Remove caches, coverage data and ./results
    help              - Show this help message

Example:
    uv run test
    uv run test-slow
    uv run lint
"""

import pathlib
import shlex
import shutil
import subprocess
import sys
from typing import Callable, Dict, List, Tuple

# suite name -> (marker expression, banner)
PYTEST_SUITES: Dict[str, Tuple[str, str]] = {
    "test": ("not slow", "Running all tests except slow experiment checks"),
    "test_unit": ("unit", "Running unit tests"),
    "test_property": ("property", "Running property tests"),
    "test_integration": ("integration and not slow", "Running integration tests"),
    "test_slow": ("slow", "Running slow experiment checks"),
}

ARTIFACT_DIRS = [".pytest_cache", "htmlcov", ".hypothesis", "results"]


def run_cmd(cmd: str | List[str], description: str = "") -> int:
    """Run a command and return the exit code."""
    if description:
        print(f"🚀 {description}")
    argv = shlex.split(cmd) if isinstance(cmd, str) else cmd
    print(f"   Running: {' '.join(argv)}")
    return subprocess.run(argv).returncode


def pytest_command(markers: str, *extra: str) -> List[str]:
    return ["uv", "run", "pytest", "tests/", *extra, "-m", markers]


def run_suite(name: str) -> int:
    markers, banner = PYTEST_SUITES[name]
    return run_cmd(pytest_command(markers), banner)


def run_test() -> int:
    return run_suite("test")


def run_test_unit() -> int:
    return run_suite("test_unit")


def run_test_property() -> int:
    return run_suite("test_property")


def run_test_integration() -> int:
    return run_suite("test_integration")


def run_test_slow() -> int:
    """Ten repetitions of every scenario; set CONTRAIL_WORKERS to parallelize."""
    return run_suite("test_slow")


def run_test_coverage() -> int:
    cmd = pytest_command(
        "not slow", "--cov=contrail", "--cov-report=html", "--cov-report=term-missing"
    )
    return run_cmd(cmd, "Running tests with coverage report")


def run_lint() -> int:
    print("🧹 Running code linting and formatting")
    codes = [
        run_cmd("uv run ruff check --fix", "Checking and fixing code issues"),
        run_cmd("uv run ruff format", "Formatting code"),
    ]
    return max(codes)


def _remove_artifacts(root: pathlib.Path) -> List[str]:
    removed = []
    for name in ARTIFACT_DIRS:
        path = root / name
        if path.exists():
            shutil.rmtree(path)
            removed.append(f"{name}/")
    coverage_file = root / ".coverage"
    if coverage_file.exists():
        coverage_file.unlink()
        removed.append(".coverage")
    caches = [p for p in root.rglob("__pycache__") if p.is_dir()]
    for cache in caches:
        shutil.rmtree(cache)
    if caches:
        removed.append(f"{len(caches)} __pycache__ directories")
    return removed


def run_clean() -> int:
    print("🧹 Cleaning artifacts")
    try:
        for item in _remove_artifacts(pathlib.Path(".")):
            print(f"   Removed {item}")
    except OSError as e:
        print(f"❌ Error during cleanup: {e}")
        return 1
    print("✅ Cleanup completed")
    return 0


def help_cmd() -> int:
    print(__doc__)
    return 0


COMMANDS: Dict[str, Callable[[], int]] = {
    "test": run_test,
    "test_unit": run_test_unit,
    "test_property": run_test_property,
    "test_integration": run_test_integration,
    "test_slow": run_test_slow,
    "test_coverage": run_test_coverage,
    "lint": run_lint,
    "clean": run_clean,
    "help": help_cmd,
}


def _entry(command: Callable[[], int]) -> Callable[[], None]:
    def run() -> None:
        sys.exit(command())

    run.__name__ = command.__name__.removeprefix("run_")
    return run


# Entry points for project.scripts
test = _entry(run_test)
test_unit = _entry(run_test_unit)
test_property = _entry(run_test_property)
test_integration = _entry(run_test_integration)
test_slow = _entry(run_test_slow)
test_coverage = _entry(run_test_coverage)
lint = _entry(run_lint)
clean = _entry(run_clean)


def main(argv: List[str] | None = None) -> int:
    """Dispatch a task by name (dashes and underscores are interchangeable)."""
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        help_cmd()
        return 1
    command = COMMANDS.get(argv[0].replace("-", "_"))
    if command is None:
        print(f"❌ Unknown command: {argv[0]}")
        print("Run the help command to see available commands.")
        return 1
    return command()


if __name__ == "__main__":
    sys.exit(main())
