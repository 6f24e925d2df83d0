"""
Pytest configuration and fixtures for the test suite.
"""

import os
import sys

import numpy as np
import pytest

# Make the src layout importable without installing the package
sys.path.insert(
    0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
)

from contrail.config import ExperimentConfig  # noqa: E402
from contrail.environment import FunctionSpec, NoiseModel, Sample, TaskSpec  # noqa: E402
from contrail.learner import MlpModel, TrainConfig, init_model  # noqa: E402


@pytest.fixture
def fast_train_config():
    """Training settings that converge in well under a second per model."""
    return TrainConfig(
        learning_rate=0.05,
        max_epochs=3000,
        convergence_tol=1e-5,
        convergence_patience=10,
        convergence_rule="relative",
        hidden_units=6,
    )


@pytest.fixture
def linear_task():
    """Noiseless y = -3x + 10 on [0, 10]."""
    return TaskSpec("f1", FunctionSpec("linear", -3.0, 10.0))


@pytest.fixture
def noisy_linear_task():
    return TaskSpec(
        "f2",
        FunctionSpec("linear", -3.0, -5.0),
        NoiseModel(mean=1.0, std=2.0, enabled=True),
    )


@pytest.fixture
def quadratic_task():
    return TaskSpec("f4", FunctionSpec("quadratic"))


@pytest.fixture
def small_experiment_config(tmp_path, fast_train_config):
    """Two repetitions with fast training, writing into a temporary directory."""
    return ExperimentConfig(
        repetitions=2,
        base_seed=7,
        train=fast_train_config,
        output_dir=tmp_path / "results",
    )


@pytest.fixture
def serial_workers(monkeypatch):
    """Force serial execution regardless of the caller's environment."""
    monkeypatch.setenv("CONTRAIL_WORKERS", "1")


class TestDataFactory:
    """Factory for creating test data."""

    @staticmethod
    def sample(x, y, seed=0, source_task="t"):
        return Sample(np.asarray(x, dtype=float), np.asarray(y, dtype=float), seed, source_task)

    @staticmethod
    def line_sample(n=20, a=2.0, b=1.0, seed=0, source_task="line"):
        """Evenly spaced noiseless points on y = a*x + b over [0, 10]."""
        x = np.linspace(0.0, 10.0, n)
        return Sample(x, a * x + b, seed, source_task)

    @staticmethod
    def model(hidden_units=4, seed=0) -> MlpModel:
        return init_model(hidden_units, seed)

    @staticmethod
    def random_model(hidden_units=3, seed=0) -> MlpModel:
        rng = np.random.default_rng(seed)
        return MlpModel(
            w1=rng.normal(size=hidden_units),
            b1=rng.normal(size=hidden_units),
            w2=rng.normal(size=hidden_units),
            b2=float(rng.normal()),
        )


@pytest.fixture
def factory():
    return TestDataFactory
