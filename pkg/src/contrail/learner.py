"""
One-hidden-layer tanh regression network trained by full-batch gradient descent.

Parameters are kept in the fixed order w1, b1, w2, b2. Training works in a
standardized space: every sample is z-scored with its own statistics, and the
statistics of the task a model was fitted to are stored on the model so that
`predict` answers on the original scale.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from sklearn.metrics import mean_squared_error, r2_score

from contrail.environment import Sample, make_rng
from contrail.errors import ReportIOError, TrainingError, ValidationError

logger = logging.getLogger(__name__)

SNAPSHOT_HEADER = "contrail-model v1"

TrainMode = Literal["full", "partial"]
PartialRule = Literal["full_run_fraction", "max_epochs_fraction"]
ConvergenceRule = Literal["absolute", "relative"]


@dataclass(frozen=True)
class Standardization:
    x_mean: float = 0.0
    x_std: float = 1.0
    y_mean: float = 0.0
    y_std: float = 1.0


IDENTITY_SCALING = Standardization()


def fit_standardization(s: Sample) -> Standardization:
    """Population mean/std of a sample; a zero spread is replaced by 1."""
    x_std = float(np.std(s.x))
    y_std = float(np.std(s.y))
    return Standardization(
        x_mean=float(np.mean(s.x)),
        x_std=x_std if x_std > 0 else 1.0,
        y_mean=float(np.mean(s.y)),
        y_std=y_std if y_std > 0 else 1.0,
    )


def _standardize(s: Sample, scaling: Standardization) -> tuple[np.ndarray, np.ndarray]:
    return (
        (s.x - scaling.x_mean) / scaling.x_std,
        (s.y - scaling.y_mean) / scaling.y_std,
    )


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Weights of the network plus its training-state metadata."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    activation: str = "tanh"
    epochs_trained: int = 0
    converged: bool = False
    standardization: Standardization = field(default=IDENTITY_SCALING)

    def __post_init__(self):
        arrays = []
        for name in ("w1", "b1", "w2"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrays.append(arr)
        object.__setattr__(self, "b2", float(self.b2))
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise ValidationError("w1, b1 and w2 must all have hidden_units entries")
        if arrays[0].size < 1:
            raise ValidationError("A model needs at least one hidden unit")
        if self.activation != "tanh":
            raise ValidationError(f"Unsupported activation: {self.activation!r}")
        if not (all(np.all(np.isfinite(a)) for a in arrays) and math.isfinite(self.b2)):
            raise ValidationError("Model parameters must be finite")

    @property
    def hidden_units(self) -> int:
        return int(self.w1.shape[0])

    @property
    def n_parameters(self) -> int:
        return 3 * self.hidden_units + 1

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            np.array_equal(parameter_vector(self), parameter_vector(other))
            and self.activation == other.activation
            and self.epochs_trained == other.epochs_trained
            and self.converged == other.converged
            and self.standardization == other.standardization
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class TrainConfig:
    """
    Gradient-descent settings shared by every training call.

    Convergence is declared once the epoch-to-epoch loss improvement stays
    below convergence_tol for convergence_patience epochs; the improvement is
    measured on the standardized MSE ("absolute") or relative to the previous
    loss ("relative"). Restricted runs scale the hidden layer by
    hidden_lr_factor and the output layer by output_lr_factor, and stop after
    finetune_max_epochs. `seed` is mixed into every initialization seed.
    """

    learning_rate: float = 0.05
    max_epochs: int = 20000
    convergence_tol: float = 1e-7
    convergence_patience: int = 20
    convergence_rule: ConvergenceRule = "absolute"
    partial_fraction: float = 0.25
    partial_rule: PartialRule = "full_run_fraction"
    hidden_lr_factor: float = 0.0
    output_lr_factor: float = 0.1
    finetune_max_epochs: int = 2000
    hidden_units: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.convergence_tol > 0:
            raise ValidationError(
                f"convergence_tol must be > 0, got {self.convergence_tol}"
            )
        if self.convergence_patience < 1:
            raise ValidationError(
                f"convergence_patience must be >= 1, got {self.convergence_patience}"
            )
        if not 0.0 < self.partial_fraction <= 1.0:
            raise ValidationError(
                f"partial_fraction must lie in (0, 1], got {self.partial_fraction}"
            )
        if self.convergence_rule not in ("absolute", "relative"):
            raise ValidationError(f"Unknown convergence_rule: {self.convergence_rule!r}")
        if self.partial_rule not in ("full_run_fraction", "max_epochs_fraction"):
            raise ValidationError(f"Unknown partial_rule: {self.partial_rule!r}")
        if not 0.0 <= self.hidden_lr_factor <= 1.0:
            raise ValidationError(
                f"hidden_lr_factor must lie in [0, 1], got {self.hidden_lr_factor}"
            )
        if not 0.0 <= self.output_lr_factor <= 1.0:
            raise ValidationError(
                f"output_lr_factor must lie in [0, 1], got {self.output_lr_factor}"
            )
        if self.finetune_max_epochs < 1:
            raise ValidationError(
                f"finetune_max_epochs must be >= 1, got {self.finetune_max_epochs}"
            )
        if self.hidden_units < 1:
            raise ValidationError(f"hidden_units must be >= 1, got {self.hidden_units}")


@dataclass(frozen=True)
class EvalReport:
    r2: float
    mse: float
    n_points: int


def parameter_vector(model: MlpModel) -> np.ndarray:
    return np.concatenate([model.w1, model.b1, model.w2, [model.b2]])


def with_parameters(model: MlpModel, theta: np.ndarray, **changes) -> MlpModel:
    """Copy of `model` carrying the flat parameter vector `theta`."""
    h = model.hidden_units
    if theta.shape != (3 * h + 1,):
        raise ValidationError(
            f"Expected {3 * h + 1} parameters for {h} hidden units, got {theta.shape}"
        )
    return dataclasses.replace(
        model,
        w1=theta[:h].copy(),
        b1=theta[h : 2 * h].copy(),
        w2=theta[2 * h : 3 * h].copy(),
        b2=float(theta[3 * h]),
        **changes,
    )


def init_model(hidden_units: int, seed: int) -> MlpModel:
    """Weights uniform on +-1/sqrt(fan_in), biases zero."""
    if hidden_units < 1:
        raise ValidationError(f"hidden_units must be >= 1, got {hidden_units}")
    rng = make_rng(seed)
    w1 = rng.uniform(-1.0, 1.0, hidden_units)
    limit = 1.0 / math.sqrt(hidden_units)
    w2 = rng.uniform(-limit, limit, hidden_units)
    return MlpModel(
        w1=w1, b1=np.zeros(hidden_units), w2=w2, b2=0.0, epochs_trained=0, converged=False
    )


def _split(theta: np.ndarray, h: int):
    return theta[:h], theta[h : 2 * h], theta[2 * h : 3 * h], theta[3 * h]


def _loss_and_grad(
    theta: np.ndarray, h: int, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    w1, b1, w2, b2 = _split(theta, h)
    act = np.tanh(np.outer(x, w1) + b1)
    residual = act @ w2 + b2 - y
    m = x.shape[0]
    loss = float(residual @ residual) / m
    d_out = (2.0 / m) * residual
    d_pre = np.outer(d_out, w2) * (1.0 - act * act)
    grad = np.empty_like(theta)
    grad[:h] = x @ d_pre
    grad[h : 2 * h] = d_pre.sum(axis=0)
    grad[2 * h : 3 * h] = act.T @ d_out
    grad[3 * h] = d_out.sum()
    return loss, grad


def _loss(theta: np.ndarray, h: int, x: np.ndarray, y: np.ndarray) -> float:
    w1, b1, w2, b2 = _split(theta, h)
    residual = np.tanh(np.outer(x, w1) + b1) @ w2 + b2 - y
    return float(residual @ residual) / x.shape[0]


def forward(model: MlpModel, x):
    """Raw network map w2 . tanh(w1*x + b1) + b2 (no standardization)."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.tanh(np.multiply.outer(arr, model.w1) + model.b1) @ model.w2 + model.b2
    return float(out) if arr.ndim == 0 else out


def predict(model: MlpModel, x):
    """Prediction on the original scale of the task the model was fitted to."""
    sc = model.standardization
    out = forward(model, (np.asarray(x, dtype=np.float64) - sc.x_mean) / sc.x_std)
    return out * sc.y_std + sc.y_mean


def _require_points(s: Sample):
    if len(s) == 0:
        raise ValidationError("Sample must contain at least one point")


def mse_loss(model: MlpModel, s: Sample) -> float:
    _require_points(s)
    return _loss(parameter_vector(model), model.hidden_units, s.x, s.y)


def gradient(model: MlpModel, s: Sample) -> np.ndarray:
    """Analytic gradient of mse_loss in parameter order w1, b1, w2, b2."""
    _require_points(s)
    return _loss_and_grad(parameter_vector(model), model.hidden_units, s.x, s.y)[1]


def numeric_gradient(model: MlpModel, s: Sample, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of mse_loss, one parameter at a time."""
    if not step > 0:
        raise ValidationError(f"step must be > 0, got {step}")
    _require_points(s)
    theta = parameter_vector(model)
    h = model.hidden_units
    grad = np.empty_like(theta)
    for i in range(theta.shape[0]):
        up, down = theta.copy(), theta.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (_loss(up, h, s.x, s.y) - _loss(down, h, s.x, s.y)) / (2.0 * step)
    return grad


@dataclass
class _Descent:
    theta: np.ndarray
    epochs: int
    converged: bool
    initial_loss: float
    final_loss: float
    # parameters and loss after each epoch, index 0 being the start
    path: list[tuple[np.ndarray, float]] | None = None

    def prefix(self, epochs: int) -> _Descent:
        """State of the same run after its first `epochs` steps."""
        theta, loss = self.path[epochs]
        return _Descent(theta, epochs, False, self.initial_loss, loss)


def _improvement(cfg: TrainConfig, loss: float, new_loss: float) -> float:
    if cfg.convergence_rule == "relative":
        return (loss - new_loss) / max(abs(loss), 1e-300)
    return loss - new_loss


def _descend(
    theta0: np.ndarray,
    h: int,
    x: np.ndarray,
    y: np.ndarray,
    lr: np.ndarray,
    cfg: TrainConfig,
    epochs: int | None = None,
    limit: int | None = None,
    keep_path: bool = False,
) -> _Descent:
    """
    Gradient descent from theta0.

    With `epochs` set, runs exactly that many steps; otherwise stops once the
    loss improvement stays below the tolerance for `patience` epochs, or after
    `limit` epochs (max_epochs by default). `keep_path` records every
    intermediate state so that prefixes of the run can be read back.
    """
    theta = theta0.copy()
    if epochs is not None:
        limit = epochs
    elif limit is None:
        limit = cfg.max_epochs
    loss, grad = _loss_and_grad(theta, h, x, y)
    initial = loss
    path = [(theta.copy(), loss)] if keep_path else None
    streak = 0
    converged = False
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, limit + 1):
            theta -= lr * grad
            new_loss, grad = _loss_and_grad(theta, h, x, y)
            done = epoch
            if not (math.isfinite(new_loss) and np.all(np.isfinite(theta))):
                raise TrainingError(f"Training diverged at epoch {epoch}", epoch=epoch)
            if path is not None:
                path.append((theta.copy(), new_loss))
            if epochs is None:
                improved = _improvement(cfg, loss, new_loss) >= cfg.convergence_tol
                streak = 0 if improved else streak + 1
                if streak >= cfg.convergence_patience:
                    loss = new_loss
                    converged = True
                    break
            loss = new_loss
    return _Descent(theta, done, converged, initial, loss, path)


def _training_arrays(
    samples: Sequence[Sample],
) -> tuple[np.ndarray, np.ndarray, Standardization]:
    scalings = [fit_standardization(s) for s in samples]
    parts = [_standardize(s, sc) for s, sc in zip(samples, scalings)]
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    return x, y, scalings[0]


def partial_epochs(cfg: TrainConfig, full_run_epochs: int | None) -> int:
    """Epoch budget of a partial run under the configured rule."""
    if cfg.partial_rule == "max_epochs_fraction" or full_run_epochs is None:
        return max(1, math.ceil(cfg.partial_fraction * cfg.max_epochs))
    return max(1, math.ceil(cfg.partial_fraction * full_run_epochs))


def train(
    model: MlpModel,
    s: Sample | Sequence[Sample],
    cfg: TrainConfig,
    mode: TrainMode = "full",
    restricted: bool = False,
    full_run_epochs: int | None = None,
) -> MlpModel:
    """
    Train a copy of `model` on one sample, or on several pooled samples.

    Each pooled sample is standardized with its own statistics; the returned
    model carries the statistics of the first one. `restricted` scales the
    hidden-layer (w1, b1) learning rate by cfg.hidden_lr_factor and the output
    layer (w2, b2) by cfg.output_lr_factor, and caps the run at
    cfg.finetune_max_epochs.

    In partial mode the partial model is read off the measuring full run,
    which it is a prefix of. `full_run_epochs` supplies an already known
    full-run length for the same start and data, skipping the measuring run.
    """
    samples = [s] if isinstance(s, Sample) else list(s)
    if not samples or any(len(part) == 0 for part in samples):
        raise ValidationError("Training needs at least one non-empty sample")
    if mode not in ("full", "partial"):
        raise ValidationError(f"Unknown training mode: {mode!r}")

    h = model.hidden_units
    x, y, scaling = _training_arrays(samples)
    lr = np.full(3 * h + 1, cfg.learning_rate)
    limit = cfg.max_epochs
    if restricted:
        lr[: 2 * h] *= cfg.hidden_lr_factor
        lr[2 * h :] *= cfg.output_lr_factor
        limit = min(limit, cfg.finetune_max_epochs)
    theta0 = parameter_vector(model)

    if mode == "full":
        run = _descend(theta0, h, x, y, lr, cfg, limit=limit)
        if not run.converged:
            if restricted:
                logger.debug(f"Restricted training stopped at its {limit}-epoch cap")
            else:
                logger.warning(
                    f"Full training hit max_epochs={cfg.max_epochs} before converging"
                )
    elif cfg.partial_rule == "full_run_fraction" and full_run_epochs is None:
        measured = _descend(theta0, h, x, y, lr, cfg, limit=limit, keep_path=True)
        budget = min(partial_epochs(cfg, measured.epochs), measured.epochs)
        run = measured.prefix(budget)
        logger.debug(f"Partial training: {budget} of {measured.epochs} full-run epochs")
    else:
        budget = partial_epochs(cfg, full_run_epochs)
        run = _descend(theta0, h, x, y, lr, cfg, epochs=budget)
        run.converged = False
        logger.debug(f"Partial training: {budget} of {full_run_epochs} full-run epochs")

    if run.final_loss > run.initial_loss:
        raise TrainingError(
            f"Training loss rose from {run.initial_loss:.6g} to {run.final_loss:.6g}",
            epoch=run.epochs,
        )
    return with_parameters(
        model,
        run.theta,
        epochs_trained=model.epochs_trained + run.epochs,
        converged=run.converged,
        standardization=scaling,
    )


def r_squared(model: MlpModel, s: Sample) -> EvalReport:
    """Coefficient of determination on the original scale."""
    if len(s) < 2:
        raise ValidationError("R^2 needs at least two points")
    if np.ptp(s.y) == 0.0:
        raise ValidationError("R^2 is undefined for a sample with zero target variance")
    predicted = predict(model, s.x)
    return EvalReport(
        r2=float(r2_score(s.y, predicted)),
        mse=float(mean_squared_error(s.y, predicted)),
        n_points=len(s),
    )


def _fmt(value: float) -> str:
    return format(value, ".17g")


def dumps_model(model: MlpModel) -> str:
    sc = model.standardization
    lines = [
        SNAPSHOT_HEADER,
        model.activation,
        str(model.hidden_units),
        _fmt(sc.x_mean),
        _fmt(sc.x_std),
        _fmt(sc.y_mean),
        _fmt(sc.y_std),
    ]
    lines.extend(_fmt(v) for v in parameter_vector(model).tolist())
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> MlpModel:
    """Parse a snapshot; training metadata is not part of the format."""
    lines = text.splitlines()
    if not lines or lines[0] != SNAPSHOT_HEADER:
        raise ValidationError(f"Snapshot must start with {SNAPSHOT_HEADER!r}")
    try:
        activation = lines[1]
        h = int(lines[2])
        sc = Standardization(*(float(v) for v in lines[3:7]))
        theta = np.array([float(v) for v in lines[7:]])
    except (IndexError, ValueError) as e:
        raise ValidationError(f"Malformed model snapshot: {e}") from e
    if theta.shape != (3 * h + 1,):
        raise ValidationError(
            f"Snapshot declares {h} hidden units but holds {theta.size} parameters"
        )
    template = MlpModel(np.zeros(h), np.zeros(h), np.zeros(h), 0.0, activation=activation)
    return with_parameters(template, theta, standardization=sc)


def save_model(model: MlpModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_model(model), encoding="utf-8", newline="\n")
    except OSError as e:
        raise ReportIOError(f"Cannot write model snapshot {path}: {e}") from e
    return path


def load_model(path: str | Path) -> MlpModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"Cannot read model snapshot {path}: {e}") from e
    return loads_model(text)


def gradient_discrepancy(
    analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-8
) -> float:
    """Largest element-wise relative gap, ignoring entries within atol."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff <= atol, 0.0, diff / np.where(scale > 0, scale, 1.0))
    return float(rel.max(initial=0.0))


def run_gradient_check(
    trials: int = 100,
    seed: int = 0,
    step: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-8,
) -> dict:
    """
    Compare analytic and central-difference gradients on random models/samples.

    Returns a dict with 'error', 'message', 'max_rel_error' and 'trials'.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    rng = make_rng(seed)
    worst = 0.0
    for trial in range(trials):
        h = int(rng.integers(1, 11))
        m = int(rng.integers(2, 31))
        model = MlpModel(
            w1=rng.normal(size=h),
            b1=rng.normal(size=h),
            w2=rng.normal(size=h),
            b2=float(rng.normal()),
        )
        s = Sample(rng.uniform(-2.0, 2.0, m), rng.normal(size=m), seed, f"trial-{trial}")
        gap = gradient_discrepancy(gradient(model, s), numeric_gradient(model, s, step), atol)
        worst = max(worst, gap)

    if worst >= rtol:
        message = f"Gradient check failed: max relative error {worst:.3e} >= {rtol:g}"
        logger.warning(message)
        return {"error": True, "message": message, "max_rel_error": worst, "trials": trials}
    message = f"Gradient check passed over {trials} trials (max relative error {worst:.3e})"
    logger.info(message)
    return {"error": False, "message": message, "max_rel_error": worst, "trials": trials}
