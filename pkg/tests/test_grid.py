"""Grid geometry, field sampling, norms, discrete smoothing, serialization."""

import io

import numpy as np
import pytest

from structadapt.grid import (
    Field,
    Observation,
    apply_kernel,
    draw_noise,
    field_from_bytes,
    field_from_csv,
    field_to_bytes,
    field_to_csv,
    lp_norm,
    make_grid,
    sample_function,
)
from structadapt.kernels import ThetaPoint, build_structural_kernel, build_univariate_kernel


class TestMakeGrid:
    def test_1d_example(self):
        grid = make_grid(1, 257, 1.5)
        assert grid.spacing == pytest.approx(3.0 / 256, abs=0)
        assert grid.axis()[128] == pytest.approx(0.0, abs=1e-15)

    def test_2d_example(self):
        grid = make_grid(2, 65, 2.0)
        assert grid.spacing == pytest.approx(4.0 / 64)
        assert grid.size == 65**2

    def test_margin_violation(self):
        # 1/2 + sqrt(2) ~ 1.914 is the two-support-radii margin in d = 2
        with pytest.raises(ValueError, match="margin"):
            make_grid(2, 65, 0.9)
        with pytest.raises(ValueError, match="margin"):
            make_grid(2, 65, 1.75)

    def test_even_points_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            make_grid(1, 256, 1.5)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            make_grid(1, 7, 1.5)

    def test_nodes_formula(self):
        grid = make_grid(1, 9, 1.6)
        np.testing.assert_allclose(
            grid.axis(), -1.6 + grid.spacing * np.arange(9), rtol=0, atol=0
        )

    def test_inner_nonempty(self):
        grid = make_grid(1, 9, 1.6)
        s = grid.inner_slice()
        assert s.stop > s.start


class TestSampleFunction:
    def test_constant(self):
        grid = make_grid(1, 257, 1.5)
        f = sample_function(lambda t: np.ones(t.shape[0]), grid)
        np.testing.assert_array_equal(f.values, 1.0)

    def test_linear(self):
        grid = make_grid(1, 257, 1.5)
        f = sample_function(lambda t: t[:, 0], grid)
        assert f.values[0] == -1.5
        assert f.values[-1] == 1.5
        np.testing.assert_allclose(np.diff(f.values), grid.spacing, atol=1e-14)

    def test_pointwise_exp(self):
        grid = make_grid(1, 65, 1.5)
        f = sample_function(lambda t: np.exp(t[:, 0] ** 2), grid)
        np.testing.assert_allclose(f.values, np.exp(grid.axis() ** 2), rtol=1e-15)

    def test_scalar_callable(self):
        grid = make_grid(1, 9, 1.6)
        f = sample_function(lambda point: float(point[0]) * 2.0, grid)
        np.testing.assert_allclose(f.values, 2.0 * grid.axis())

    def test_nonfinite_named(self):
        grid = make_grid(1, 9, 1.6)
        with pytest.raises(ValueError, match="node"):
            sample_function(lambda t: np.where(t[:, 0] > 0, np.inf, 0.0), grid)


class TestDrawNoise:
    def test_bit_identical(self):
        grid = make_grid(1, 257, 1.5)
        a = draw_noise(grid, 99)
        b = draw_noise(grid, 99)
        np.testing.assert_array_equal(a.values, b.values)

    def test_moments_at_scale(self):
        grid = make_grid(1, 1_000_001, 1.5)
        x = draw_noise(grid, 31415).values
        assert abs(x.mean()) < 0.005
        assert abs(x.var() - 1.0) < 0.01


class TestLpNorm:
    def test_constant_inner_l2(self):
        grid = make_grid(2, 65, 1.9143)
        f = Field(grid, np.ones(grid.size))
        err = 2 * 2 * grid.spacing
        assert lp_norm(f, 2.0, "inner") == pytest.approx(1.0, abs=err)

    def test_linear_sup(self):
        # node max over strictly-inside nodes: within one spacing of 1/2
        grid = make_grid(1, 257, 1.5)
        f = sample_function(lambda t: t[:, 0], grid)
        assert lp_norm(f, np.inf, "inner") == pytest.approx(0.5, abs=grid.spacing)

    def test_linear_l2_closed_form(self):
        # integral of x^2 over [-1/2, 1/2] is 1/12
        grid = make_grid(1, 257, 1.5)
        f = sample_function(lambda t: t[:, 0], grid)
        assert lp_norm(f, 2.0, "inner") == pytest.approx(np.sqrt(1.0 / 12.0), abs=1e-3)

    def test_p_validation(self):
        grid = make_grid(1, 9, 1.6)
        f = Field(grid, np.ones(9))
        with pytest.raises(ValueError):
            lp_norm(f, 0.5)

    def test_riemann_refinement(self):
        """Successive halvings of the spacing shrink the error by >= 1.8x."""
        target = np.sqrt(1.0 / 12.0)
        errs = []
        for n in (129, 257, 513, 1025):
            grid = make_grid(1, n, 1.5)
            f = sample_function(lambda t: t[:, 0], grid)
            errs.append(abs(lp_norm(f, 2.0, "inner") - target))
        for a, b in zip(errs[:-1], errs[1:]):
            assert b < a / 1.8


def _kernel_field(grid, g, h):
    theta = ThetaPoint(
        partition=((0,),) if grid.dim == 1 else (tuple(range(grid.dim)),),
        directions=np.eye(grid.dim),
        bandwidth=(h,) * grid.dim,
    )
    return build_structural_kernel(theta, g, grid)


class TestApplyKernel:
    def setup_method(self):
        self.grid = make_grid(1, 257, 1.5)
        self.g0 = build_univariate_kernel(0)
        self.kf = _kernel_field(self.grid, self.g0, 0.25)
        self.kernel = self.kf.as_field()

    def test_constant_preserved(self):
        f = Field(self.grid, np.full(self.grid.size, 3.25))
        out = apply_kernel(self.kernel, f, "inner")
        np.testing.assert_allclose(out.inner_nd(), 3.25, rtol=1e-12)

    def test_linear_preserved(self):
        f = sample_function(lambda t: t[:, 0], self.grid)
        out = apply_kernel(self.kernel, f, "inner")
        np.testing.assert_allclose(out.inner_nd(), f.inner_nd(), atol=1e-12)

    def test_quadratic_second_moment(self):
        """Smoothing x^2 adds h^2 times the kernel's second moment (1/28)."""
        h = 0.25
        f = sample_function(lambda t: t[:, 0] ** 2, self.grid)
        out = apply_kernel(self.kernel, f, "inner")
        expected = f.inner_nd() + h**2 / 28.0
        np.testing.assert_allclose(out.inner_nd(), expected, atol=1e-4)

    def test_fft_matches_direct(self):
        rng = np.random.default_rng(7)
        f = Field(self.grid, rng.normal(size=self.grid.size))
        a = apply_kernel(self.kernel, f, "inner", method="fft")
        b = apply_kernel(self.kernel, f, "inner", method="direct")
        scale = np.max(np.abs(b.inner_nd()))
        assert np.max(np.abs(a.inner_nd() - b.inner_nd())) < 1e-10 * scale

    def test_linearity(self):
        rng = np.random.default_rng(8)
        f = Field(self.grid, rng.normal(size=self.grid.size))
        gfld = Field(self.grid, rng.normal(size=self.grid.size))
        a, b = 1.7, -0.45
        combo = Field(self.grid, a * f.values + b * gfld.values)
        lhs = apply_kernel(self.kernel, combo).values
        rhs = a * apply_kernel(self.kernel, f).values + b * apply_kernel(
            self.kernel, gfld
        ).values
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_support_overflow_raises(self):
        # a two-stage-width kernel cannot smooth the dilated region in-margin
        from structadapt.kernels import convolve_kernels

        small = make_grid(1, 65, 1.5)
        kf = _kernel_field(small, self.g0, 1.0)
        pair = convolve_kernels(kf, kf)
        values = Field(small, np.ones(small.size))
        with pytest.raises(ValueError, match="overflow"):
            apply_kernel(pair, values, "extended")


class TestObservation:
    def test_eps_range(self):
        grid = make_grid(1, 9, 1.6)
        sig = Field(grid, np.zeros(9))
        noi = draw_noise(grid, 1)
        with pytest.raises(ValueError):
            Observation(signal=sig, noise=noi, eps=1.0, seed=1)

    def test_working_field_scaling(self):
        grid = make_grid(1, 9, 1.6)
        sig = Field(grid, np.ones(9))
        noi = draw_noise(grid, 1)
        obs = Observation(signal=sig, noise=noi, eps=0.5, seed=1)
        expected = 1.0 + 0.5 / np.sqrt(grid.cell_volume) * noi.values
        np.testing.assert_allclose(obs.working_field().values, expected)


class TestSerialization:
    def test_binary_round_trip(self):
        grid = make_grid(2, 9, 2.0)
        f = Field(grid, np.linspace(-1, 1, grid.size))
        back = field_from_bytes(field_to_bytes(f))
        assert back.grid == grid
        np.testing.assert_array_equal(back.values, f.values)

    def test_csv_round_trip(self):
        grid = make_grid(1, 9, 1.6)
        f = Field(grid, np.linspace(0, 1, 9))
        buf = io.StringIO()
        field_to_csv(f, buf)
        buf.seek(0)
        back = field_from_csv(buf, grid)
        np.testing.assert_allclose(back.values, f.values, rtol=1e-11)

    def test_length_validation(self):
        grid = make_grid(1, 9, 1.6)
        with pytest.raises(ValueError, match="length"):
            Field(grid, np.ones(8))

    def test_finite_validation(self):
        grid = make_grid(1, 9, 1.6)
        vals = np.ones(9)
        vals[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Field(grid, vals)
