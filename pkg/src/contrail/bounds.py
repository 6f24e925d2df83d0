"""
Closed-form sample-complexity and error-gap bounds for continual transfer.

All logarithms are natural logarithms. VC dimensions and log-capacities are
caller-supplied: capacities enter as functions returning log C(eps, ...).
Sample-size reports carry the exact real value and its integer ceiling;
comparisons should use the real value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal

from contrail.errors import DomainError, ValidationError

logger = logging.getLogger(__name__)

LOG_BASE = "natural"

CapacityLog = Callable[[float, int], float]
StarCapacityLog = Callable[[float], float]
BoundKind = Literal["sample_size", "error_gap"]
EpsilonVariant = Literal["as_printed", "per_task_summed"]
CSV_HEADER = "bound,value,ceiling,params"

# alternative spellings accepted for the continual_epsilon variant
VARIANT_ALIASES: dict[str, str] = {"as_eq35": "as_printed", "as_eq31_summed": "per_task_summed"}


@dataclass(frozen=True)
class BoundReport:
    name: str
    value: float
    kind: BoundKind
    inputs_echo: tuple[tuple[str, object], ...]

    @property
    def ceiling(self) -> int | None:
        if self.kind != "sample_size":
            return None
        return max(1, math.ceil(self.value))

    def params_text(self) -> str:
        return "".join(f"{k}={_render(v)};" for k, v in self.inputs_echo)

    def as_text_block(self) -> str:
        lines = [f"bound={self.name}", f"value={self.value!r}"]
        if self.ceiling is not None:
            lines.append(f"ceiling={self.ceiling}")
        lines.extend(f"{k}={_render(v)}" for k, v in self.inputs_echo)
        lines.append(f"log={LOG_BASE}")
        return "\n".join(lines)

    def as_csv_row(self) -> str:
        ceiling = "" if self.ceiling is None else str(self.ceiling)
        return f"{self.name},{self.value!r},{ceiling},{self.params_text()}"


def _render(value) -> str:
    if callable(value):
        return getattr(value, "label", getattr(value, "__name__", "fn"))
    return repr(value) if isinstance(value, float) else str(value)


def _report(name: str, value: float, kind: BoundKind, **inputs) -> BoundReport:
    if not math.isfinite(value):
        raise DomainError(f"{name} evaluated to a non-finite value")
    if kind == "sample_size" and value < 0:
        raise DomainError(f"{name} evaluated to a negative sample size")
    return BoundReport(name, value, kind, tuple(sorted(inputs.items())))


def _positive(name: str, value: float, upper: float | None = None):
    if not (math.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be a positive real, got {value}")
    if upper is not None and not value < upper:
        raise ValidationError(f"{name} must be below {upper}, got {value}")


def _nonnegative(name: str, value: float):
    if not (math.isfinite(value) and value >= 0):
        raise ValidationError(f"{name} must be >= 0, got {value}")


def _delta(delta: float):
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")


def _count(name: str, value: int, minimum: int = 1):
    if int(value) != value or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value}")


def _capacity(name: str, value: float) -> float:
    if not math.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must return a finite value >= 0, got {value}")
    return value


# Capacity presets ------------------------------------------------------------


def capacity_preset(kind: str, k: float = 1.0) -> CapacityLog:
    """log C(eps, n) as k, k*n or k*sqrt(n)."""
    _nonnegative("capacity constant", k)
    shapes = {
        "constant": lambda eps, n: k,
        "linear": lambda eps, n: k * n,
        "sqrt": lambda eps, n: k * math.sqrt(n),
    }
    if kind not in shapes:
        raise ValidationError(
            f"Unknown capacity preset {kind!r}; expected one of {sorted(shapes)}"
        )
    fn = shapes[kind]
    fn.label = f"{kind}:{k:g}"  # type: ignore[attr-defined]
    return fn


def parse_capacity(text: str) -> CapacityLog:
    """Parse 'kind' or 'kind:k', e.g. 'sqrt:10'."""
    kind, _, k = text.partition(":")
    try:
        return capacity_preset(kind.strip(), float(k) if k else 1.0)
    except ValueError as e:
        raise ValidationError(f"Bad capacity spec {text!r}: {e}") from e


def tied_dimensions(d: float) -> dict[str, float]:
    """Preset for many tasks, where d_max, d_H(n) and VC-dim(H) coincide."""
    _positive("d", d)
    return {"d_max": d, "d_H_n": d, "vc_dim_HH": d}


# Forward and backward transfer -----------------------------------------------


def min_target_sample(eps1: float, delta: float, d_max: float) -> BoundReport:
    """Target sample size for forward transfer (and source size for backward)."""
    _positive("eps1", eps1, upper=12.0)
    _delta(delta)
    _nonnegative("d_max", d_max)
    value = (64.0 / eps1**2) * (2.0 * d_max * math.log(12.0 / eps1) + math.log(8.0 / delta))
    return _report("min_target_sample", value, "sample_size", eps1=eps1, delta=delta, d_max=d_max)


def min_source_sample(
    eps2: float, delta: float, d_H_n: float, coefficient: float = 88.0
) -> BoundReport:
    """Per-source sample size for forward transfer from n sources."""
    _positive("eps2", eps2, upper=22.0)
    _delta(delta)
    _nonnegative("d_H_n", d_H_n)
    _positive("coefficient", coefficient)
    value = (coefficient / eps2**2) * (
        2.0 * d_H_n * math.log(22.0 / eps2) + 0.5 * math.log(8.0 / delta)
    )
    return _report(
        "min_source_sample",
        value,
        "sample_size",
        eps2=eps2,
        delta=delta,
        d_H_n=d_H_n,
        coefficient=coefficient,
    )


def backward_target_sample(
    eps: float, delta: float, d_H_2: float, coefficient: float = 88.0
) -> BoundReport:
    """
    Target sample size for backward transfer from one newer task.

    The sequential form prints a leading 8 at time n and 88 at time n+1;
    `coefficient` selects either.
    """
    report = min_source_sample(eps, delta, d_H_2, coefficient)
    return _report(
        "backward_target_sample",
        report.value,
        "sample_size",
        eps=eps,
        delta=delta,
        d_H_2=d_H_2,
        coefficient=coefficient,
    )


def forward_excess_error(eps1: float, eps2: float) -> BoundReport:
    """Excess true error of the forward-transfer hypothesis over the best in H."""
    _positive("eps1", eps1)
    _positive("eps2", eps2)
    return _report("forward_excess_error", 2.0 * (eps1 + eps2), "error_gap", eps1=eps1, eps2=eps2)


def backward_excess_error(eps1: float, eps2: float) -> BoundReport:
    _positive("eps1", eps1)
    _positive("eps2", eps2)
    return _report("backward_excess_error", 2.0 * (eps1 + eps2), "error_gap", eps1=eps1, eps2=eps2)


def ordered_transfer_slack(eps_n: float, eps_next: float) -> BoundReport:
    """Allowed error increase between an earlier and a later transfer step."""
    _positive("eps_n", eps_n)
    _positive("eps_next", eps_next)
    return _report(
        "ordered_transfer_slack", eps_n + eps_next, "error_gap", eps_n=eps_n, eps_next=eps_next
    )


def examples_per_task_scaling(n: int, eps: float, capacity_log: CapacityLog) -> BoundReport:
    """(1/n) log C(eps, n); decreases in n iff the log-capacity grows sublinearly."""
    _count("n", n)
    _positive("eps", eps)
    value = _capacity("capacity_log", capacity_log(eps, n)) / n
    return _report(
        "examples_per_task_scaling", value, "sample_size", n=n, eps=eps, capacity=capacity_log
    )


# Continual learner -----------------------------------------------------------


def per_task_transfer_gap(i: int, n: int, eps_f: float, eps_b: float) -> BoundReport:
    """(i-1)*eps_f + (n-i)*eps_b for the i-th of n tasks."""
    _count("n", n)
    _count("i", i)
    if i > n:
        raise ValidationError(f"i must satisfy 1 <= i <= n, got i={i}, n={n}")
    _nonnegative("eps_f", eps_f)
    _nonnegative("eps_b", eps_b)
    value = (i - 1) * eps_f + (n - i) * eps_b
    return _report("per_task_transfer_gap", value, "error_gap", i=i, n=n, eps_f=eps_f, eps_b=eps_b)


def continual_epsilon(
    n: int, eps_f: float, eps_b: float, variant: EpsilonVariant = "as_printed"
) -> BoundReport:
    """
    Environment-level slack summed over n tasks.

    as_printed: n(n-1)/2 * eps_f + n(n-1) * eps_b (backward term as written).
    per_task_summed: n(n-1)/2 * (eps_f + eps_b) (sum of the per-task gaps).
    """
    _count("n", n)
    _nonnegative("eps_f", eps_f)
    _nonnegative("eps_b", eps_b)
    resolved = VARIANT_ALIASES.get(variant, variant)
    pairs = n * (n - 1) / 2.0
    if resolved == "as_printed":
        value = pairs * eps_f + n * (n - 1) * eps_b
    elif resolved == "per_task_summed":
        value = pairs * (eps_f + eps_b)
    else:
        raise ValidationError(f"Unknown continual_epsilon variant: {variant!r}")
    return _report(
        "continual_epsilon", value, "error_gap", n=n, eps_f=eps_f, eps_b=eps_b, variant=resolved
    )


def min_tasks(eps: float, delta: float, capacity_log_star: StarCapacityLog) -> BoundReport:
    """Number of tasks needed for the environment-level guarantee."""
    _positive("eps", eps)
    _delta(delta)
    log_c = _capacity("capacity_log_star", capacity_log_star(eps / 32.0))
    first = (256.0 / eps**2) * (math.log(8.0) + log_c - math.log(delta))
    value = max(first, 64.0 / eps**2)
    return _report("min_tasks", value, "sample_size", eps=eps, delta=delta, capacity=capacity_log_star)


def min_examples_per_task(
    n: int, eps: float, delta: float, capacity_log_n: CapacityLog
) -> BoundReport:
    """Examples per task for n tasks learned with transfer."""
    _count("n", n)
    _positive("eps", eps)
    _delta(delta)
    log_c = _capacity("capacity_log_n", capacity_log_n(eps / 32.0, n))
    first = (256.0 / (n * eps**2)) * (math.log(8.0) + log_c - math.log(delta))
    value = max(first, 64.0 / eps**2)
    return _report(
        "min_examples_per_task",
        value,
        "sample_size",
        n=n,
        eps=eps,
        delta=delta,
        capacity=capacity_log_n,
    )


def generalization_gap(m: int, d: float, eps: float, delta: float) -> BoundReport:
    """sqrt((32/m) * (d ln(2 eps m / d) + ln(2/delta)))."""
    _count("m", m)
    _positive("d", d)
    _positive("eps", eps)
    _delta(delta)
    ratio = 2.0 * eps * m / d
    if not ratio > 1.0:
        raise DomainError(
            f"generalization_gap needs 2*eps*m/d > 1 for a positive log term, got {ratio:g}"
        )
    value = math.sqrt((32.0 / m) * (d * math.log(ratio) + math.log(2.0 / delta)))
    return _report("generalization_gap", value, "error_gap", m=m, d=d, eps=eps, delta=delta)


# Whole-configuration evaluation ----------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    epsilon1: float
    epsilon2: float
    epsilon_f: float
    epsilon_b: float
    epsilon: float
    delta: float
    d_max: float
    d_H_n: float
    vc_dim_HH: float
    n: int
    i: int
    m: int
    capacity_log: CapacityLog

    def __post_init__(self):
        for name in ("epsilon1", "epsilon2", "epsilon_f", "epsilon_b", "epsilon"):
            _positive(name, getattr(self, name))
        _delta(self.delta)
        _count("n", self.n)
        _count("i", self.i)
        _count("m", self.m)
        if self.i > self.n:
            raise ValidationError(f"i must satisfy 1 <= i <= n, got i={self.i}, n={self.n}")
        if not 0 < self.d_max <= self.d_H_n <= self.vc_dim_HH:
            raise ValidationError(
                "Dimensions must satisfy 0 < d_max <= d_H_n <= vc_dim_HH, got "
                f"{self.d_max}, {self.d_H_n}, {self.vc_dim_HH}"
            )


def evaluate_all(inputs: BoundInputs) -> list[BoundReport]:
    """Every bound evaluated for one configuration."""
    cap = inputs.capacity_log
    reports = [
        min_target_sample(inputs.epsilon1, inputs.delta, inputs.d_max),
        min_source_sample(inputs.epsilon2, inputs.delta, inputs.d_H_n),
        backward_target_sample(inputs.epsilon2, inputs.delta, inputs.d_H_n),
        forward_excess_error(inputs.epsilon1, inputs.epsilon2),
        backward_excess_error(inputs.epsilon1, inputs.epsilon2),
        examples_per_task_scaling(inputs.n, inputs.epsilon, cap),
        per_task_transfer_gap(inputs.i, inputs.n, inputs.epsilon_f, inputs.epsilon_b),
        continual_epsilon(inputs.n, inputs.epsilon_f, inputs.epsilon_b, "as_printed"),
        continual_epsilon(inputs.n, inputs.epsilon_f, inputs.epsilon_b, "per_task_summed"),
        min_tasks(inputs.epsilon, inputs.delta, _star(cap)),
        min_examples_per_task(inputs.n, inputs.epsilon, inputs.delta, cap),
        generalization_gap(inputs.m, inputs.vc_dim_HH, inputs.epsilon, inputs.delta),
    ]
    logger.debug(f"Evaluated {len(reports)} bounds")
    return reports


def _star(capacity: CapacityLog) -> StarCapacityLog:
    fn = lambda eps: capacity(eps, 1)  # noqa: E731
    fn.label = getattr(capacity, "label", "fn")  # type: ignore[attr-defined]
    return fn


# name -> (callable, {param: parser})
BOUND_REGISTRY: dict[str, tuple[Callable[..., BoundReport], dict[str, Callable]]] = {
    "min_target_sample": (min_target_sample, {"eps1": float, "delta": float, "d_max": float}),
    "min_source_sample": (
        min_source_sample,
        {"eps2": float, "delta": float, "d_H_n": float, "coefficient": float},
    ),
    "backward_target_sample": (
        backward_target_sample,
        {"eps": float, "delta": float, "d_H_2": float, "coefficient": float},
    ),
    "forward_excess_error": (forward_excess_error, {"eps1": float, "eps2": float}),
    "backward_excess_error": (backward_excess_error, {"eps1": float, "eps2": float}),
    "ordered_transfer_slack": (ordered_transfer_slack, {"eps_n": float, "eps_next": float}),
    "examples_per_task_scaling": (
        examples_per_task_scaling,
        {"n": int, "eps": float, "capacity_log": parse_capacity},
    ),
    "per_task_transfer_gap": (
        per_task_transfer_gap,
        {"i": int, "n": int, "eps_f": float, "eps_b": float},
    ),
    "continual_epsilon": (
        continual_epsilon,
        {"n": int, "eps_f": float, "eps_b": float, "variant": str},
    ),
    "min_tasks": (
        min_tasks,
        {"eps": float, "delta": float, "capacity_log_star": lambda t: _star(parse_capacity(t))},
    ),
    "min_examples_per_task": (
        min_examples_per_task,
        {"n": int, "eps": float, "delta": float, "capacity_log_n": parse_capacity},
    ),
    "generalization_gap": (
        generalization_gap,
        {"m": int, "d": float, "eps": float, "delta": float},
    ),
}

BOUND_ALIASES = {"min_examples_theorem3": "min_examples_per_task"}
BOUND_REGISTRY.update({alias: BOUND_REGISTRY[name] for alias, name in BOUND_ALIASES.items()})


def evaluate_named(name: str, raw_params: dict[str, str]) -> BoundReport:
    """Evaluate a registered bound from string-valued parameters."""
    if name not in BOUND_REGISTRY:
        raise ValidationError(
            f"Unknown bound {name!r}; available: {', '.join(sorted(BOUND_REGISTRY))}"
        )
    fn, parsers = BOUND_REGISTRY[name]
    unknown = sorted(set(raw_params) - set(parsers))
    if unknown:
        raise ValidationError(f"Unknown parameter(s) for {name}: {', '.join(unknown)}")
    kwargs = {}
    for key, text in raw_params.items():
        try:
            kwargs[key] = parsers[key](text)
        except ValueError as e:
            raise ValidationError(f"Bad value for {key}: {text!r}") from e
    try:
        return fn(**kwargs)
    except TypeError as e:
        raise ValidationError(f"Missing parameter(s) for {name}: {e}") from e
