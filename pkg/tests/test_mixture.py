import numpy as np
import pytest

import dosebound as db
from dosebound.mixture import density, log_density, variance


def mix_of(weights, means, variances):
    return db.MixtureDensity(
        np.asarray(weights, float), np.asarray(means, float), np.asarray(variances, float)
    )


class TestValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(db.InputError):
            mix_of([0.5, 0.4], [0, 1], [1, 1])

    def test_variances_must_be_positive(self):
        with pytest.raises(db.InputError):
            mix_of([0.5, 0.5], [0, 1], [1, 0])

    def test_length_mismatch(self):
        with pytest.raises(db.InputError):
            mix_of([1.0], [0, 1], [1, 1])


class TestLogDensity:
    def test_standard_normal_at_mode(self):
        mix = mix_of([1.0], [0.0], [1.0])
        assert log_density(mix, 0.0) == pytest.approx(np.log(1 / np.sqrt(2 * np.pi)), abs=1e-12)

    def test_identical_components_collapse(self):
        single = mix_of([1.0], [0.7], [2.0])
        double = mix_of([0.5, 0.5], [0.7, 0.7], [2.0, 2.0])
        for y in (-3.0, 0.0, 0.7, 5.0):
            assert log_density(double, y) == pytest.approx(log_density(single, y), abs=1e-12)

    def test_two_component_hand_value(self):
        mix = mix_of([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
        expected = np.log(np.exp(-0.5) / np.sqrt(2 * np.pi))
        assert log_density(mix, 0.0) == pytest.approx(expected, abs=1e-12)

    def test_finite_in_far_tail(self):
        mix = mix_of([1.0], [0.0], [1.0])
        assert np.isfinite(log_density(mix, 100.0))

    def test_vectorized_matches_scalar(self):
        mix = mix_of([0.3, 0.7], [-2.0, 1.0], [0.5, 2.0])
        ys = np.linspace(-4, 4, 17)
        vec = log_density(mix, ys)
        np.testing.assert_allclose(vec, [log_density(mix, y) for y in ys], atol=1e-14)


class TestConditionalMean:
    def test_single_component(self):
        assert db.conditional_mean(mix_of([1.0], [4.2], [1.0])) == pytest.approx(4.2)

    def test_symmetric(self):
        assert db.conditional_mean(mix_of([0.5, 0.5], [-1, 1], [1, 1])) == pytest.approx(0.0)

    def test_weighted_sum(self):
        assert db.conditional_mean(mix_of([0.25, 0.75], [0, 2], [1, 1])) == pytest.approx(1.5)


class TestSample:
    def test_near_degenerate_component(self):
        floor = 1e-3
        mix = mix_of([1.0], [5.0], [floor])
        ys = db.sample(mix, 10, np.random.default_rng(0))
        assert np.all(np.abs(ys - 5.0) <= 6 * np.sqrt(floor))

    def test_clt_mean(self):
        mix = mix_of([1.0], [0.0], [1.0])
        ys = db.sample(mix, 100_000, np.random.default_rng(1))
        assert abs(ys.mean()) < 0.02

    def test_component_frequencies(self):
        # Well separated components; assignment recovered by sign.
        mix = mix_of([0.3, 0.7], [-10.0, 10.0], [0.01, 0.01])
        ys = db.sample(mix, 100_000, np.random.default_rng(2))
        frac_high = np.mean(ys > 0)
        assert abs(frac_high - 0.7) < 0.01

    def test_reproducible(self):
        mix = mix_of([0.5, 0.5], [-1, 1], [1, 1])
        a = db.sample(mix, 100, np.random.default_rng(3))
        b = db.sample(mix, 100, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_rejects_zero_draws(self):
        with pytest.raises(db.InputError):
            db.sample(mix_of([1.0], [0.0], [1.0]), 0, np.random.default_rng(0))


def test_variance_closed_form():
    mix = mix_of([0.25, 0.75], [0.0, 2.0], [1.0, 4.0])
    mean = 1.5
    expected = 0.25 * (1 + 0) + 0.75 * (4 + 4) - mean**2
    assert variance(mix) == pytest.approx(expected, abs=1e-12)


def test_density_integrates_to_one():
    mix = mix_of([0.4, 0.6], [-1.0, 2.0], [0.3, 1.7])
    grid = np.linspace(-12, 14, 20001)
    total = np.trapezoid(density(mix, grid), grid)
    assert total == pytest.approx(1.0, abs=1e-9)
