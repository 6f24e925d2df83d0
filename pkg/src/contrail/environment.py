"""
Task environment: synthetic generating functions, label noise, seeded sampling,
train/test splitting and the affine transformation family that relates tasks.

Random draws use numpy's PCG64 bit generator. Gaussian noise is produced from
PCG64 uniforms with the Box-Muller cosine branch so that the stream does not
depend on numpy's normal sampler.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd

from contrail.errors import ReportIOError, ValidationError

logger = logging.getLogger(__name__)

PRNG_ALGORITHM = "pcg64+box-muller"

FunctionKind = Literal["linear", "quadratic"]


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of parts (BLAKE2b, 8-byte digest)."""
    text = "|".join(str(part) for part in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used by every sampling routine."""
    if seed < 0:
        raise ValidationError(f"Seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def _box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    # 1 - U keeps the log argument in (0, 1]
    u1 = 1.0 - rng.random(count)
    u2 = rng.random(count)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class FunctionSpec:
    """True labeling rule of a task: a*x + b, or x**2."""

    kind: FunctionKind
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise ValidationError(f"Unknown function kind: {self.kind!r}")
        if self.kind == "linear" and (not math.isfinite(self.a) or self.a == 0.0):
            raise ValidationError(
                f"Linear function needs a finite nonzero slope, got a={self.a}"
            )
        if not math.isfinite(self.b):
            raise ValidationError(f"Intercept must be finite, got b={self.b}")

    def evaluate(self, x):
        """Evaluate on a scalar or numpy array."""
        if self.kind == "quadratic":
            return np.square(x) if isinstance(x, np.ndarray) else x * x
        return self.a * x + self.b

    def describe(self) -> str:
        if self.kind == "quadratic":
            return "y = x^2"
        sign = "-" if self.b < 0 else "+"
        return f"y = {self.a:g}x {sign} {abs(self.b):g}"


@dataclass(frozen=True)
class NoiseModel:
    mean: float = 0.0
    std: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ValidationError(f"Noise mean must be finite, got {self.mean}")
        if not math.isfinite(self.std) or self.std < 0:
            raise ValidationError(f"Noise std must be >= 0, got {self.std}")


@dataclass(frozen=True)
class TaskSpec:
    """Distribution of one task: labeling function, noise, input interval, size."""

    id: str
    function: FunctionSpec
    noise: NoiseModel = field(default_factory=NoiseModel)
    domain_lo: float = 0.0
    domain_hi: float = 10.0
    sample_size: int = 30

    def __post_init__(self):
        if not (math.isfinite(self.domain_lo) and math.isfinite(self.domain_hi)):
            raise ValidationError(f"Task {self.id}: domain bounds must be finite")
        if not self.domain_lo < self.domain_hi:
            raise ValidationError(
                f"Task {self.id}: empty domain [{self.domain_lo}, {self.domain_hi}]"
            )
        if self.sample_size < 2:
            raise ValidationError(
                f"Task {self.id}: sample_size must be >= 2, got {self.sample_size}"
            )


@dataclass(frozen=True, eq=False)
class Sample:
    """Labeled points drawn from a task; x and y are read-only arrays."""

    x: np.ndarray
    y: np.ndarray
    seed: int
    source_task: str

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValidationError("Sample x and y must be 1-D arrays of equal length")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.source_task == other.source_task
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "y": self.y})


def generate_sample(spec: TaskSpec, seed: int) -> Sample:
    """Draw spec.sample_size points with x uniform on the task's domain."""
    rng = make_rng(seed)
    n = spec.sample_size
    x = spec.domain_lo + (spec.domain_hi - spec.domain_lo) * rng.random(n)
    y = spec.function.evaluate(x)
    if spec.noise.enabled:
        y = y + spec.noise.mean + spec.noise.std * _box_muller(rng, n)
    return Sample(x=x, y=y, seed=seed, source_task=spec.id)


def train_size(n: int, train_fraction: float) -> int:
    """Round-half-up share of n points assigned to training."""
    return int(math.floor(train_fraction * n + 0.5))


def split_sample(
    s: Sample, train_fraction: float, seed: int
) -> tuple[Sample, Sample]:
    """Shuffle with a seeded permutation and cut into disjoint train/test parts."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(
            f"train_fraction must lie in (0, 1), got {train_fraction}"
        )
    n = len(s)
    if n == 0:
        raise ValidationError("Cannot split an empty sample")
    n_train = train_size(n, train_fraction)
    if n_train == 0 or n_train == n:
        raise ValidationError(
            f"Split of {n} points at {train_fraction} leaves an empty part"
        )
    order = make_rng(seed).permutation(n)
    train_idx, test_idx = order[:n_train], order[n_train:]
    train = Sample(s.x[train_idx], s.y[train_idx], s.seed, s.source_task)
    test = Sample(s.x[test_idx], s.y[test_idx], s.seed, s.source_task)
    return train, test


def write_sample_csv(s: Sample, path: str | Path) -> Path:
    """Write `x,y` rows with 17 significant digits."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        s.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        raise ReportIOError(f"Cannot write sample to {path}: {e}") from e
    logger.debug(f"Wrote {len(s)} points of task {s.source_task} to {path}")
    return path


def read_sample_csv(path: str | Path, seed: int, source_task: str) -> Sample:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except OSError as e:
        raise ReportIOError(f"Cannot read sample from {path}: {e}") from e
    if list(frame.columns) != ["x", "y"]:
        raise ValidationError(f"Sample file {path} must have header x,y")
    frame = frame.astype(np.float64)
    return Sample(frame["x"].to_numpy(), frame["y"].to_numpy(), seed, source_task)


@dataclass(frozen=True)
class AffineTransform:
    """Input transformation x -> scale*x + shift."""

    scale: float
    shift: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.scale) or self.scale == 0.0:
            raise ValidationError(
                f"Affine scale must be finite and nonzero, got {self.scale}"
            )
        if not math.isfinite(self.shift):
            raise ValidationError(f"Affine shift must be finite, got {self.shift}")

    @classmethod
    def identity(cls) -> AffineTransform:
        return cls(1.0, 0.0)

    def apply(self, x):
        return self.scale * x + self.shift

    def is_close(self, other: AffineTransform, tol: float = 1e-12) -> bool:
        return abs(self.scale - other.scale) <= tol and abs(self.shift - other.shift) <= tol


def compose(f: AffineTransform, g: AffineTransform) -> AffineTransform:
    """h(x) = f(g(x))."""
    return AffineTransform(f.scale * g.scale, f.scale * g.shift + f.shift)


def invert(f: AffineTransform) -> AffineTransform:
    if f.scale == 0.0:
        raise ValidationError("Cannot invert a transform with zero scale")
    return AffineTransform(1.0 / f.scale, -f.shift / f.scale)


def relating_transform(
    source: FunctionSpec, target: FunctionSpec
) -> Optional[AffineTransform]:
    """
    Find t with target(x) == source(t(x)) for a pair of linear rules.

    Quadratic rules are unrelated to linear ones by construction, so any pair
    involving one yields None.
    """
    if source.kind != "linear" or target.kind != "linear":
        return None
    return AffineTransform(target.a / source.a, (target.b - source.b) / source.a)


def is_related(source: FunctionSpec, target: FunctionSpec) -> bool:
    return relating_transform(source, target) is not None
