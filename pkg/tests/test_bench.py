"""Risk evaluation, bound verification, and rate machinery."""

import numpy as np
import pytest

from structadapt.bench import (
    adaptive_rate,
    aligned_oracle_theta,
    ideal_bandwidth,
    mc_risk,
    mc_risk_fixed,
    mc_risk_selected,
    noise_norm_estimate,
    oracle_objective,
    rate_experiment,
    risk_sandwich,
    unstructured_rate_exponent,
    verify_oracle_inequality,
)
from structadapt.estimators import bias_field
from structadapt.functions import make_test_function
from structadapt.grid import make_grid, sample_function
from structadapt.kernels import build_univariate_kernel
from structadapt.rng import derive_seed, normal_field
from structadapt.selection import StructureGridConfig, build_theta_grid, calibrate_kappa


def d1_setting(n_h=5, h_min=0.1, h_max=0.5, order=0, n=513, eps=0.1):
    grid = make_grid(1, n, 1.5)
    g = build_univariate_kernel(order)
    cfg = StructureGridConfig(
        dim=1, n_angles=1, n_h=n_h, h_min=h_min, h_max=h_max, kernel_order=order
    )
    return grid, g, build_theta_grid(cfg, grid, g, eps=eps)


class TestRateFormulas:
    def test_benchmark_rate_value(self):
        # [0.1 * sqrt(ln 10)]^(2/3)
        assert adaptive_rate(0.1, 1.0) == pytest.approx(0.2845, abs=5e-4)

    def test_exponents(self):
        assert unstructured_rate_exponent(1.0, 2) == pytest.approx(0.5)
        assert unstructured_rate_exponent(1.0, 1) == pytest.approx(2.0 / 3.0)

    def test_ideal_bandwidth_plugin(self):
        g0 = build_univariate_kernel(0)
        got = ideal_bandwidth(1.0, 1, 1.0, 0.05, g0, dim=1)
        expected = (0.05 * np.sqrt(np.log(20.0))) ** (2.0 / 3.0) * (
            np.sqrt(10.0 / 7.0)
        ) ** (2.0 / 3.0)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_ideal_bandwidth_monotone_in_eps(self):
        g0 = build_univariate_kernel(0)
        h = [ideal_bandwidth(1.0, 1, 2.0, e, g0, dim=2) for e in (0.01, 0.05, 0.2)]
        assert h[0] < h[1] < h[2]

    def test_ideal_bandwidth_validation(self):
        g0 = build_univariate_kernel(0)
        with pytest.raises(ValueError):
            ideal_bandwidth(1.0, 1, 1.0, 1.5, g0, dim=1)


class TestAlignedOracle:
    def test_zero_block_gets_widest(self):
        f = make_test_function({"family": "single-index", "dim": 2, "beta": 1.0})
        g0 = build_univariate_kernel(0)
        theta = aligned_oracle_theta(f, 0.1, g0, h_max=0.6)
        assert theta.bandwidth[1] == 0.6  # inactive direction
        assert theta.bandwidth[0] < 0.6

    def test_floor_applies(self):
        f = make_test_function(
            {"family": "single-index", "dim": 2, "beta": 1.0, "amplitude": 3.0,
             "freq": 4.0}
        )
        g0 = build_univariate_kernel(0)
        theta = aligned_oracle_theta(f, 0.01, g0, h_max=0.6, h_floor=0.11)
        assert theta.bandwidth[0] == 0.11


class TestMcRisk:
    def test_noise_free_risk_is_bias_norm(self):
        grid, g, tg = d1_setting()
        f = sample_function(lambda t: np.cos(2 * np.pi * t[:, 0]), grid)
        kern = tg.kernels[2]
        rep = mc_risk_fixed(kern, f, 0.0, 2.0, 5, seed=1)
        assert rep.ci_halfwidth == 0.0
        assert rep.risk == pytest.approx(bias_field(kern, f).norm(2.0), rel=1e-12)

    def test_zero_signal_noise_scaling(self):
        """risk / eps matches an independently coded noise-norm simulation."""
        grid, g, tg = d1_setting(n=257)
        kern = tg.kernels[1]
        zero = sample_function(lambda t: 0.0 * t[:, 0], grid)
        eps = 0.25
        rep = mc_risk_fixed(kern, zero, eps, 2.0, 500, seed=303)

        # independent oracle: plain numpy convolution with its own seeds
        from structadapt.grid import inner_norm_tools

        tools = inner_norm_tools(grid)
        vals = np.empty(500)
        for r in range(500):
            xi = normal_field(derive_seed(9009, "oracle", r), grid.size)
            z = np.convolve(xi, kern.patch[::-1], mode="same") * np.sqrt(grid.spacing)
            vals[r] = tools.norms(tools.crop_field(z.reshape(grid.shape)), 2.0)
        assert rep.risk / eps == pytest.approx(np.mean(vals), rel=0.10)

    def test_dispatcher(self):
        grid, g, tg = d1_setting()
        f = sample_function(lambda t: np.cos(2 * np.pi * t[:, 0]), grid)
        rep = mc_risk("fixed", kernel=tg.kernels[0], f_field=f, eps=0.0, p=2.0,
                      n_rep=3, seed=1)
        assert rep.n_rep == 3
        with pytest.raises(ValueError):
            mc_risk("other")

    def test_selected_risk_runs(self):
        grid, g, tg = d1_setting(n=257, n_h=4)
        cal = calibrate_kappa(tg, np.inf, 0.2, 120, seed=5)
        f = sample_function(lambda t: np.cos(2 * np.pi * t[:, 0]), grid)
        rep, chosen = mc_risk_selected(tg, cal, f, 0.1, np.inf, 10, seed=6)
        assert rep.risk > 0
        assert chosen.shape == (10,)


class TestRiskSandwich:
    def test_bounds_hold(self):
        grid, g, tg = d1_setting(n=257)
        f = sample_function(lambda t: np.cos(2 * np.pi * t[:, 0]), grid)
        rows = risk_sandwich(tg.kernels[2], f, 0.1, [1.0, 2.0, np.inf], 150, 150, seed=11)
        for row in rows:
            assert row["lower_ok"] and row["upper_ok"], row

    def test_noise_free_degenerate(self):
        grid, g, tg = d1_setting()
        f = sample_function(lambda t: np.cos(2 * np.pi * t[:, 0]), grid)
        rows = risk_sandwich(tg.kernels[2], f, 0.0, [2.0], 5, 5, seed=11)
        row = rows[0]
        assert row["risk"] == pytest.approx(row["bias_norm"], rel=1e-12)
        assert row["upper_ok"] and row["lower_ok"]


class TestOracleInequality:
    def test_zero_bias_case(self):
        grid, g, tg = d1_setting(order=2, h_min=0.2, h_max=0.5, n_h=3, n=257)
        cal = calibrate_kappa(tg, np.inf, 0.2, 120, seed=13)
        f = make_test_function({"family": "polynomial", "dim": 1, "degree": 2})
        report = verify_oracle_inequality(f, tg, 0.1, np.inf, cal, 40, seed=14)
        assert report["passes"], report

    def test_singleton_grid_trivial(self):
        grid, g, tg = d1_setting(n_h=1, h_min=0.25, h_max=0.3, n=257)
        cal = calibrate_kappa(tg, np.inf, 0.2, 120, seed=15)
        f = make_test_function({"family": "single-index", "dim": 1, "beta": 1.0})
        report = verify_oracle_inequality(f, tg, 0.1, np.inf, cal, 40, seed=16)
        assert report["passes"]
        assert report["oracle_index"] == 0

    def test_noisy_single_index(self):
        grid, g, tg = d1_setting(n=257, n_h=5)
        cal = calibrate_kappa(tg, np.inf, 0.1, 200, seed=17)
        f = make_test_function(
            {"family": "single-index", "dim": 1, "beta": 1.0, "freq": 1.5}
        )
        report = verify_oracle_inequality(f, tg, 0.1, np.inf, cal, 60, seed=18)
        assert report["passes"], report
        assert report["ratio"] < 1.0


class TestOracleObjective:
    def test_refinement_stability(self):
        """The oracle objective is stable under lattice refinement."""
        values = {}
        for n in (257, 1025):
            grid = make_grid(1, n, 1.5)
            g = build_univariate_kernel(0)
            cfg = StructureGridConfig(
                dim=1, n_angles=1, n_h=4, h_min=0.15, h_max=0.5, kernel_order=0
            )
            tg = build_theta_grid(cfg, grid, g, eps=0.1)
            f = sample_function(lambda t: np.cos(2 * np.pi * t[:, 0]), grid)
            _, values[n], _, _ = oracle_objective(f, tg, 0.1, 3.0, np.inf)
        assert values[257] == pytest.approx(values[1025], rel=2e-3)


class TestRateExperiment:
    def test_d1_smoke_and_structure(self):
        grid = make_grid(1, 257, 1.5)
        g = build_univariate_kernel(0)
        cfg = StructureGridConfig(
            dim=1, n_angles=1, n_h=4, h_min=0.08, h_max=0.6, kernel_order=0
        )
        rep = rate_experiment(
            {"family": "single-index", "dim": 1, "profile": "tri", "amplitude": 1.5,
             "freq": 2.0},
            beta=1.0,
            eps_list=[0.2, 0.1, 0.05],
            grid=grid,
            config=cfg,
            g=g,
            p=np.inf,
            n_rep=8,
            n_cal=80,
            delta=0.25,
            seed=99,
        )
        d = rep.to_dict()
        assert d["target_exponent"] == pytest.approx(2.0 / 3.0)
        assert len(d["risks"]) == 3
        assert all(r > 0 for r in d["risks"])
        assert d["phi_values"][0] == pytest.approx(adaptive_rate(0.2, 1.0))
        # risks decrease along the ladder
        assert d["risks"][0] > d["risks"][-1]

    def test_eps_list_validation(self):
        grid = make_grid(1, 257, 1.5)
        g = build_univariate_kernel(0)
        cfg = StructureGridConfig(dim=1, n_h=3, h_min=0.1, h_max=0.5)
        with pytest.raises(ValueError, match="decreasing"):
            rate_experiment(
                {"family": "zero", "dim": 1}, 1.0, [0.1, 0.2], grid, cfg, g,
                np.inf, 2, 80, 0.25, 1,
            )


class TestNoiseNormEstimate:
    def test_scales_with_kernel_norm(self):
        grid, g, tg = d1_setting(n=257)
        narrow, wide = tg.kernels[0], tg.kernels[-1]
        m_narrow, _ = noise_norm_estimate(narrow, grid, 2.0, 120, seed=1)
        m_wide, _ = noise_norm_estimate(wide, grid, 2.0, 120, seed=1)
        assert m_narrow > m_wide  # smaller bandwidth, larger noise


class TestFixedOracleShape:
    @pytest.mark.parametrize(
        "spec",
        [
            {"family": "single-index", "dim": 1, "beta": 1.0, "freq": 1.0},
            {"family": "single-index", "dim": 1, "profile": "tri", "freq": 2.0},
        ],
    )
    def test_constant_stable_across_noise_ladder(self, spec):
        """risk(h*) / (L^(1/(2b+1)) * rate) stays within +-20% of its mean.

        Requires a lattice fine enough that the balancing bandwidth is
        resolvable at every noise level.
        """
        from structadapt.bench import aligned_oracle_theta
        from structadapt.kernels import build_structural_kernel

        grid = make_grid(1, 1025, 1.5)
        g = build_univariate_kernel(0)
        f = make_test_function(spec)
        holder = f.components[0].holder_const
        ff = sample_function(f, grid)
        consts = []
        for eps in (0.2, 0.1, 0.05, 0.025):
            theta = aligned_oracle_theta(f, eps, g, 0.6, h_floor=3 * grid.spacing)
            kern = build_structural_kernel(theta, g, grid)
            rep = mc_risk_fixed(kern, ff, eps, np.inf, 80, seed=71)
            consts.append(rep.risk / (holder ** (1.0 / 3.0) * adaptive_rate(eps, 1.0)))
        consts = np.array(consts)
        assert np.max(np.abs(consts / consts.mean() - 1.0)) <= 0.20


class TestStructuralInvariance:
    def test_rotation_does_not_change_aligned_risk(self):
        """The aligned oracle's risk is orientation-free (within the MC CI)."""
        from structadapt.bench import aligned_oracle_theta
        from structadapt.kernels import build_structural_kernel

        grid = make_grid(2, 129, 0.5 + np.sqrt(2))
        g = build_univariate_kernel(0)
        risks = []
        for angle in (0.0, 0.6):
            f = make_test_function(
                {"family": "single-index", "dim": 2, "beta": 1.0, "freq": 1.2,
                 "angle": angle}
            )
            ff = sample_function(f, grid)
            theta = aligned_oracle_theta(f, 0.1, g, h_max=0.6, h_floor=0.12)
            kern = build_structural_kernel(theta, g, grid)
            risks.append(mc_risk_fixed(kern, ff, 0.1, np.inf, 60, seed=404))
        gap = abs(risks[0].risk - risks[1].risk)
        assert gap <= risks[0].ci_halfwidth + risks[1].ci_halfwidth + 0.02
