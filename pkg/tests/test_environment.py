"""
Tests for the task environment: functions, noise, sampling, splits and transforms.
"""

import numpy as np
import pytest

from contrail.environment import (
    PRNG_ALGORITHM,
    AffineTransform,
    FunctionSpec,
    NoiseModel,
    Sample,
    TaskSpec,
    compose,
    derive_seed,
    generate_sample,
    invert,
    is_related,
    make_rng,
    read_sample_csv,
    relating_transform,
    split_sample,
    train_size,
    write_sample_csv,
)
from contrail.errors import ContrailError, ReportIOError, ValidationError

F1 = FunctionSpec("linear", -3.0, 10.0)
F2 = FunctionSpec("linear", -3.0, -5.0)
F3 = FunctionSpec("linear", -6.0, -12.0)
F4 = FunctionSpec("quadratic")


@pytest.mark.unit
class TestFunctionSpec:
    """Labeling rules and their validation."""

    def test_linear_evaluation(self):
        assert F1.evaluate(0.0) == 10.0
        assert F3.evaluate(10.0) == -72.0

    def test_quadratic_evaluation(self):
        assert F4.evaluate(10.0) == 100.0
        np.testing.assert_array_equal(F4.evaluate(np.array([1.0, 2.0])), [1.0, 4.0])

    def test_vectorized_linear(self):
        np.testing.assert_allclose(F2.evaluate(np.array([0.0, 1.0])), [-5.0, -8.0])

    def test_zero_slope_rejected(self):
        with pytest.raises(ValidationError):
            FunctionSpec("linear", 0.0, 1.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValidationError):
            FunctionSpec("cubic", 1.0, 0.0)

    def test_describe(self):
        assert F1.describe() == "y = -3x + 10"
        assert F2.describe() == "y = -3x - 5"
        assert F4.describe() == "y = x^2"


@pytest.mark.unit
class TestTaskSpecValidation:
    """Rejected task and noise configurations."""

    def test_empty_domain_rejected(self):
        with pytest.raises(ValidationError):
            TaskSpec("t", F1, domain_lo=5.0, domain_hi=5.0)

    def test_tiny_sample_rejected(self):
        with pytest.raises(ValidationError):
            TaskSpec("t", F1, sample_size=1)

    def test_negative_noise_std_rejected(self):
        with pytest.raises(ValidationError):
            NoiseModel(mean=0.0, std=-1.0, enabled=True)

    def test_validation_error_is_value_error(self):
        with pytest.raises(ValueError):
            TaskSpec("t", F1, sample_size=0)
        assert issubclass(ValidationError, ContrailError)


@pytest.mark.unit
class TestSampling:
    """Seeded sample generation."""

    def test_same_seed_same_sample(self, noisy_linear_task):
        assert generate_sample(noisy_linear_task, 42) == generate_sample(noisy_linear_task, 42)

    def test_different_seed_different_sample(self, noisy_linear_task):
        a = generate_sample(noisy_linear_task, 1)
        b = generate_sample(noisy_linear_task, 2)
        assert not np.array_equal(a.x, b.x)

    def test_noiseless_points_lie_on_function(self, linear_task):
        s = generate_sample(linear_task, 3)
        np.testing.assert_array_equal(s.y, linear_task.function.evaluate(s.x))

    def test_points_within_domain(self, linear_task):
        s = generate_sample(linear_task, 11)
        assert len(s) == 30
        assert np.all((s.x >= 0.0) & (s.x < 10.0))

    def test_noise_is_added_when_enabled(self, noisy_linear_task):
        s = generate_sample(noisy_linear_task, 5)
        residual = s.y - noisy_linear_task.function.evaluate(s.x)
        assert np.any(np.abs(residual) > 1e-9)

    def test_noise_statistics(self):
        spec = TaskSpec(
            "big",
            F1,
            NoiseModel(mean=1.0, std=2.0, enabled=True),
            sample_size=20000,
        )
        s = generate_sample(spec, 2024)
        residual = s.y - F1.evaluate(s.x)
        assert abs(residual.mean() - 1.0) < 0.06
        assert abs(residual.std() - 2.0) < 0.06

    def test_disabled_noise_ignores_parameters(self):
        spec = TaskSpec("t", F1, NoiseModel(mean=5.0, std=3.0, enabled=False))
        s = generate_sample(spec, 0)
        np.testing.assert_array_equal(s.y, F1.evaluate(s.x))

    def test_sample_arrays_are_read_only(self, linear_task):
        s = generate_sample(linear_task, 0)
        with pytest.raises(ValueError):
            s.x[0] = 1.0

    def test_negative_seed_rejected(self, linear_task):
        with pytest.raises(ValidationError):
            generate_sample(linear_task, -1)

    def test_rng_is_pcg64(self):
        assert PRNG_ALGORITHM == "pcg64+box-muller"
        assert isinstance(make_rng(0).bit_generator, np.random.PCG64)


@pytest.mark.unit
class TestDeriveSeed:
    """Stable seed derivation."""

    def test_stable_across_calls(self):
        assert derive_seed(0, "s1", 3) == derive_seed(0, "s1", 3)

    def test_parts_matter(self):
        seeds = {derive_seed(0, "s1", 0), derive_seed(0, "s1", 1), derive_seed(0, "s2", 0)}
        assert len(seeds) == 3

    def test_fits_in_64_bits(self):
        assert 0 <= derive_seed("anything") < 2**64


@pytest.mark.unit
class TestSplitting:
    """Train/test splitting."""

    def test_split_sizes(self, linear_task):
        train, test = split_sample(generate_sample(linear_task, 0), 0.75, 9)
        assert (len(train), len(test)) == (23, 7)

    def test_train_size_rounds_half_up(self):
        assert train_size(30, 0.75) == 23
        assert train_size(10, 0.25) == 3
        assert train_size(4, 0.5) == 2

    def test_split_is_a_disjoint_partition(self, linear_task):
        s = generate_sample(linear_task, 4)
        train, test = split_sample(s, 0.75, 1)
        combined = np.sort(np.concatenate([train.x, test.x]))
        np.testing.assert_array_equal(combined, np.sort(s.x))
        assert not set(train.x.tolist()) & set(test.x.tolist())

    def test_split_is_deterministic(self, linear_task):
        s = generate_sample(linear_task, 4)
        assert split_sample(s, 0.75, 8) == split_sample(s, 0.75, 8)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_out_of_range(self, linear_task, fraction):
        with pytest.raises(ValidationError):
            split_sample(generate_sample(linear_task, 0), fraction, 0)

    def test_split_leaving_empty_part(self, factory):
        with pytest.raises(ValidationError):
            split_sample(factory.sample([1.0, 2.0], [1.0, 2.0]), 0.9, 0)


@pytest.mark.unit
class TestSampleCsv:
    """Sample persistence."""

    def test_write_then_read(self, linear_task, tmp_path):
        s = generate_sample(linear_task, 12)
        path = write_sample_csv(s, tmp_path / "samples" / "f1.csv")
        assert path.read_text().splitlines()[0] == "x,y"
        assert read_sample_csv(path, s.seed, s.source_task) == s

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValidationError):
            read_sample_csv(path, 0, "t")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ReportIOError):
            read_sample_csv(tmp_path / "missing.csv", 0, "t")


@pytest.mark.unit
class TestAffineTransforms:
    """The transformation family relating tasks."""

    def test_relating_f1_to_f2(self):
        t = relating_transform(F1, F2)
        assert t.is_close(AffineTransform(1.0, 5.0))

    def test_relating_f1_to_f3(self):
        t = relating_transform(F1, F3)
        assert t.is_close(AffineTransform(2.0, 22.0 / 3.0))

    def test_relating_transform_reproduces_target(self):
        xs = np.linspace(0.0, 10.0, 11)
        for source in (F1, F2, F3):
            for target in (F1, F2, F3):
                t = relating_transform(source, target)
                np.testing.assert_allclose(source.evaluate(t.apply(xs)), target.evaluate(xs))

    def test_quadratic_unrelated(self):
        assert relating_transform(F1, F4) is None
        assert relating_transform(F4, F1) is None
        assert not is_related(F4, F2)
        assert is_related(F1, F3)

    def test_inverse_composes_to_identity(self):
        f = AffineTransform(2.5, -1.0)
        assert compose(f, invert(f)).is_close(AffineTransform.identity())
        assert compose(invert(f), f).is_close(AffineTransform.identity())

    def test_compose_order(self):
        f = AffineTransform(2.0, 1.0)
        g = AffineTransform(3.0, 0.0)
        # f(g(x)) = 2*(3x) + 1
        assert compose(f, g) == AffineTransform(6.0, 1.0)

    def test_zero_scale_rejected(self):
        with pytest.raises(ValidationError):
            AffineTransform(0.0, 1.0)


@pytest.mark.unit
class TestSampleEquality:
    def test_equal_samples(self, factory):
        assert factory.sample([1, 2], [3, 4]) == factory.sample([1, 2], [3, 4])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValidationError):
            Sample(np.array([1.0, 2.0]), np.array([1.0]), 0, "t")
