"""
Experiment configuration: defaults, `key = value` config files and environment variables.

Precedence is CLI flags > config file > defaults. Environment variables only
cover process-level concerns (worker count, log level).
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

from contrail.errors import ReportIOError, ValidationError
from contrail.learner import TrainConfig

logger = logging.getLogger(__name__)

REPORT_FORMATS = frozenset({"csv", "markdown", "plotdata"})
DEFAULT_FORMATS = frozenset({"csv", "markdown"})

# Keys routed to TrainConfig; everything else belongs to ExperimentConfig
TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
EXPERIMENT_KEYS = {
    "repetitions",
    "base_seed",
    "noise_enabled",
    "sample_size",
    "train_fraction",
    "output_dir",
    "formats",
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run of the experiment depends on; defaults give the standard protocol."""

    repetitions: int = 10
    base_seed: int = 0
    noise_enabled: bool = True
    sample_size: int = 30
    train_fraction: float = 0.75
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: Path = Path("results")
    formats: frozenset = DEFAULT_FORMATS

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValidationError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.base_seed < 0:
            raise ValidationError(f"base_seed must be >= 0, got {self.base_seed}")
        if self.sample_size < 2:
            raise ValidationError(f"sample_size must be >= 2, got {self.sample_size}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "formats", frozenset(self.formats))
        unknown = self.formats - REPORT_FORMATS
        if unknown:
            raise ValidationError(f"Unknown report format(s): {', '.join(sorted(unknown))}")

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with non-None overrides applied; TrainConfig keys are routed to `train`."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        train_changes = {k: overrides.pop(k) for k in list(overrides) if k in TRAIN_KEYS}
        unknown = set(overrides) - EXPERIMENT_KEYS
        if unknown:
            raise ValidationError(f"Unknown config key(s): {', '.join(sorted(unknown))}")
        train = dataclasses.replace(self.train, **train_changes) if train_changes else self.train
        return dataclasses.replace(self, train=train, **overrides)


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _field_types() -> Dict[str, Any]:
    types: Dict[str, Any] = {
        "repetitions": int,
        "base_seed": int,
        "noise_enabled": _parse_bool,
        "sample_size": int,
        "train_fraction": float,
        "output_dir": Path,
        "formats": lambda raw: frozenset(p.strip() for p in raw.split(",") if p.strip()),
    }
    for f in dataclasses.fields(TrainConfig):
        default = f.default
        if isinstance(default, bool):
            types[f.name] = _parse_bool
        elif isinstance(default, (int, float)):
            types[f.name] = type(default)
        else:
            types[f.name] = str
    return types


def parse_config_line(line: str) -> Dict[str, Union[bool, str, Any]]:
    """
    Screen one config-file line.

    Returns a dict with 'error', 'message', 'key' and 'value'; blank and
    comment lines come back with key None.
    """
    text = line.split("#", 1)[0].strip()
    if not text:
        return {"error": False, "message": "blank", "key": None, "value": None}
    if "=" not in text:
        return {
            "error": True,
            "message": f"Expected 'key = value', got {line.strip()!r}",
            "key": None,
            "value": None,
        }
    key, raw = (part.strip() for part in text.split("=", 1))
    parsers = _field_types()
    if key not in parsers:
        return {
            "error": True,
            "message": f"Unknown config key: {key!r}",
            "key": key,
            "value": None,
        }
    try:
        value = parsers[key](raw)
    except ValueError as e:
        return {
            "error": True,
            "message": f"Bad value for {key}: {e}",
            "key": key,
            "value": None,
        }
    return {"error": False, "message": "ok", "key": key, "value": value}


def loads_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        result = parse_config_line(line)
        if result["error"]:
            logger.warning(f"Config line {number}: {result['message']}")
            raise ValidationError(f"Config line {number}: {result['message']}")
        if result["key"] is not None:
            values[result["key"]] = result["value"]
    return (base or ExperimentConfig()).with_overrides(**values)


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a `key = value` config file on top of `base` (defaults when omitted)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"Cannot read config file {path}: {e}") from e
    config = loads_config(text, base)
    logger.info(f"Loaded configuration from {path}")
    return config


def get_worker_count() -> int:
    """Parallel worker cap from CONTRAIL_WORKERS (default 1, i.e. serial)."""
    raw = os.getenv("CONTRAIL_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ValidationError(f"CONTRAIL_WORKERS must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ValidationError(f"CONTRAIL_WORKERS must be >= 1, got {workers}")
    return workers


def get_log_level() -> str:
    return os.getenv("CONTRAIL_LOG_LEVEL", "INFO").upper()
