"""Structured test-function library and its certified smoothness metadata."""

import numpy as np
import pytest

from structadapt.functions import make_test_function, trig_holder_constant


class TestRegistry:
    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown test-function family"):
            make_test_function({"family": "mystery"})

    def test_unknown_parameter(self):
        with pytest.raises(ValueError, match="unknown parameters"):
            make_test_function({"family": "zero", "shade": 1})

    def test_zero(self):
        f = make_test_function({"family": "zero", "dim": 2})
        t = np.random.default_rng(0).normal(size=(50, 2))
        assert np.all(f(t) == 0.0)
        assert f.sup_norm_bound == 0.0

    def test_families_construct(self):
        for spec in [
            {"family": "polynomial", "dim": 1},
            {"family": "polynomial", "dim": 2},
            {"family": "single-index", "dim": 1, "beta": 1.0},
            {"family": "single-index", "dim": 2, "beta": 2.0, "angle": 0.4},
            {"family": "single-index", "dim": 2, "profile": "tri"},
            {"family": "additive", "dim": 2},
            {"family": "projection-pursuit", "dim": 2, "angle": 0.7},
            {"family": "multi-index", "dim": 2},
            {"family": "multi-index", "dim": 3},
            {"family": "additive-multi-index", "dim": 3},
        ]:
            f = make_test_function(spec)
            t = np.random.default_rng(1).uniform(-0.5, 0.5, size=(20, f.dim))
            assert np.all(np.isfinite(f(t)))


class TestStructureDecomposition:
    def test_single_index_structure(self):
        phi = 0.6
        f = make_test_function(
            {"family": "single-index", "dim": 2, "beta": 1.0, "amplitude": 2.0,
             "freq": 1.5, "angle": phi}
        )
        e = np.array([np.cos(phi), np.sin(phi)])
        t = np.random.default_rng(3).uniform(-0.7, 0.7, size=(200, 2))
        expected = 2.0 * np.cos(2 * np.pi * 1.5 * (t @ e))
        np.testing.assert_allclose(f(t), expected, atol=1e-12)

    def test_additive_structure(self):
        f = make_test_function({"family": "additive", "dim": 2, "beta": 1.0})
        t = np.random.default_rng(4).uniform(-0.7, 0.7, size=(100, 2))
        expected = np.cos(2 * np.pi * t[:, 0]) + np.sin(2 * np.pi * t[:, 1])
        np.testing.assert_allclose(f(t), expected, atol=1e-12)

    def test_effective_smoothness_consistency(self):
        f = make_test_function({"family": "additive-multi-index", "dim": 3, "beta": 0.8})
        for block, comp in zip(f.true_partition, f.components):
            assert comp.beta_i == pytest.approx(0.8 * len(block))

    def test_rotation_invariance_of_values(self):
        """F(t) = f(E^T t) evaluated via blocks matches direct evaluation."""
        f = make_test_function(
            {"family": "projection-pursuit", "dim": 2, "angle": 0.3, "freq": 2.0}
        )
        t = np.random.default_rng(5).uniform(-0.7, 0.7, size=(100, 2))
        u = t @ f.true_directions
        direct = f.components[0](u[:, :1]) + f.components[1](u[:, 1:])
        np.testing.assert_allclose(f(t), direct, atol=1e-14)


class TestHolderCertification:
    def test_lipschitz_constant_cos_beta1(self):
        """For beta = 1 the certified constant is the exact sup of |f'|."""
        amp, freq = 1.3, 0.8
        L = trig_holder_constant(amp, freq, 1.0)
        assert L == pytest.approx(amp * 2 * np.pi * freq)
        u = np.linspace(-1, 1, 20001)
        f = amp * np.cos(2 * np.pi * freq * u)
        max_slope = np.max(np.abs(np.diff(f) / np.diff(u)))
        assert max_slope <= L * (1 + 1e-4)

    def test_empirical_holder_fraction(self):
        """Sampled Hoelder quotients never exceed the certified constant."""
        amp, freq, beta = 0.9, 1.2, 0.6
        L = trig_holder_constant(amp, freq, beta)
        rng = np.random.default_rng(6)
        x = rng.uniform(-1, 1, 4000)
        y = rng.uniform(-1, 1, 4000)
        f = lambda u: amp * np.cos(2 * np.pi * freq * u)
        quot = np.abs(f(x) - f(y)) / np.abs(x - y) ** beta
        assert np.max(quot) <= L * (1 + 1e-9)

    def test_triangle_is_exactly_lipschitz(self):
        f = make_test_function(
            {"family": "single-index", "dim": 1, "profile": "tri",
             "amplitude": 0.5, "freq": 2.0}
        )
        L = f.components[0].holder_const
        assert L == pytest.approx(4.0 * 0.5 * 2.0)
        rng = np.random.default_rng(7)
        x = rng.uniform(-0.7, 0.7, size=(4000, 1))
        y = rng.uniform(-0.7, 0.7, size=(4000, 1))
        quot = np.abs(f(x) - f(y)).ravel() / np.abs(x - y).ravel()
        assert np.max(quot) <= L * (1 + 1e-9)
        # the slope bound is attained (up to sampling resolution)
        assert np.max(quot) >= L * 0.95

    def test_triangle_restricted_to_lipschitz_class(self):
        with pytest.raises(ValueError, match="Lipschitz"):
            make_test_function(
                {"family": "single-index", "dim": 1, "profile": "tri", "beta": 2.0}
            )

    def test_sup_norm_bound(self):
        f = make_test_function({"family": "additive", "dim": 2, "amplitude": 1.5})
        t = np.random.default_rng(8).uniform(-0.7, 0.7, size=(500, 2))
        assert np.max(np.abs(f(t))) <= f.sup_norm_bound + 1e-12
