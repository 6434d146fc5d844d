"""Command-line entry point: one command per invocation, artifacts to disk.

Every run writes manifest.json (config, hash, seed, versions, wall time,
every numeric constant in play), report.json, delimited tables under
tables/, and rendered figures under figures/.  Exit codes: 0 success, 1
invalid configuration or runtime error, 2 a named acceptance inequality
failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import reporting
from .bench import (
    oracle_objective,
    rate_experiment,
    risk_sandwich,
    verify_oracle_inequality,
)
from .config import COMMANDS, ConfigError, ExperimentConfig
from .functions import make_test_function
from .grid import Observation, draw_noise, lp_norm, make_grid, sample_function
from .kernels import (
    build_structural_kernel,
    build_univariate_kernel,
    convolve_kernels,
    moment,
    structural_l1_bound,
    structural_l2_bound,
)
from .rng import derive_seed
from .selection import (
    StructureGridConfig,
    build_theta_grid,
    calibrate_kappa,
    bandwidth_window,
    remainder_exponent,
    select,
)

# Fixed check tolerances, surfaced in every manifest.
TOLERANCES = {
    "unit_integral": 1e-6,
    "moment": 1e-10,
    "pair_symmetry_rel": 1e-10,
    "norm_bound_slack": 0.01,
    "rate_slope_window": 0.15,
    "adaptation_factor": 3.0,
}


class CheckFailure(Exception):
    """A named acceptance inequality failed; maps to exit code 2."""


def _structure_config(cfg: ExperimentConfig) -> StructureGridConfig:
    return StructureGridConfig(
        dim=cfg.dim,
        n_angles=cfg.n_angles,
        n_h=cfg.n_h,
        eta=cfg.eta,
        kernel_order=cfg.kernel_order,
        h_min=cfg.h_min,
        h_max=cfg.h_max,
    )


def _build_setting(cfg: ExperimentConfig):
    grid = make_grid(cfg.dim, cfg.resolved_points(), cfg.resolved_half_width())
    g = build_univariate_kernel(cfg.kernel_order)
    theta_grid = build_theta_grid(_structure_config(cfg), grid, g, cfg.eps, cfg.beta_max)
    return grid, g, theta_grid


def _effective_delta(cfg: ExperimentConfig) -> float:
    if cfg.vanishing_delta:
        return cfg.eps ** remainder_exponent(cfg.dim)
    return cfg.delta


def _kappa(cfg: ExperimentConfig, theta_grid, engine=None):
    if cfg.calibration_file:
        from .selection import KappaCalibration

        with open(cfg.calibration_file) as fh:
            kappa = KappaCalibration.from_record(json.load(fh))
        if kappa.grid_hash != theta_grid.hash():
            raise ConfigError(
                f"calibration_file: record is for grid {kappa.grid_hash}, "
                f"this configuration builds grid {theta_grid.hash()}"
            )
        return kappa
    mode = "analytic" if cfg.vanishing_delta else cfg.kappa_mode
    return calibrate_kappa(
        theta_grid,
        cfg.p_value(),
        _effective_delta(cfg),
        cfg.n_cal,
        derive_seed(cfg.seed, "calibrate"),
        mode=mode,
        eps=cfg.eps,
        c3=cfg.c3,
        workers=cfg.threads,
        engine=engine,
    )


# -- commands ---------------------------------------------------------------


def cmd_verify_kernels(cfg: ExperimentConfig, out: Path) -> dict:
    grid, g, theta_grid = _build_setting(cfg)
    failures = []

    for k in range(1, g.order + 1):
        m = moment(g, k)
        if abs(m) > TOLERANCES["moment"]:
            failures.append(f"moment({k}) = {m:.3e} exceeds {TOLERANCES['moment']}")

    rows = []
    for i, (theta, kern) in enumerate(zip(theta_grid.points, theta_grid.kernels)):
        b1 = structural_l1_bound(theta, g)
        b2 = structural_l2_bound(theta, g)
        d = theta.describe()
        rows.append(
            {
                "theta_id": i,
                "partition": ";".join("+".join(str(j) for j in b) for b in d["partition"]),
                "angles": ";".join(reporting.fmt(a) for a in d["angles"]),
                "bandwidth": ";".join(reporting.fmt(h) for h in d["bandwidth"]),
                "integral": kern.integral,
                "norm1": kern.norm1,
                "norm2": kern.norm2,
                "norm1_bound": b1,
                "norm2_bound": b2,
            }
        )
        if abs(kern.integral - 1.0) > TOLERANCES["unit_integral"]:
            failures.append(f"unit integral of theta {i}: {kern.integral - 1:.3e}")
        slack = 1.0 + TOLERANCES["norm_bound_slack"]
        if kern.norm1 > b1 * slack:
            failures.append(f"L1 norm bound at theta {i}: {kern.norm1:.4f} > {b1:.4f}")
        if kern.norm2 > b2 * slack:
            failures.append(f"L2 norm bound at theta {i}: {kern.norm2:.4f} > {b2:.4f}")
    reporting.write_csv(
        out / "tables" / "kernel_catalog.csv",
        ["theta_id", "partition", "angles", "bandwidth", "integral", "norm1", "norm2",
         "norm1_bound", "norm2_bound"],
        rows,
    )

    rng = np.random.Generator(np.random.Philox(key=derive_seed(cfg.seed, "pairs")))
    n_k = len(theta_grid)
    pair_rows = []
    for _ in range(min(50, n_k * n_k)):
        i, j = int(rng.integers(n_k)), int(rng.integers(n_k))
        kij = convolve_kernels(theta_grid.kernels[i], theta_grid.kernels[j])
        kji = convolve_kernels(theta_grid.kernels[j], theta_grid.kernels[i])
        scale = float(np.max(np.abs(kij.values)))
        asym = float(np.max(np.abs(kij.values - kji.values))) / scale
        integral = float(np.sum(kij.values) * grid.cell_volume)
        pair_rows.append({"i": i, "j": j, "symmetry_rel": asym, "integral": integral})
        if asym > TOLERANCES["pair_symmetry_rel"]:
            failures.append(f"pair symmetry ({i},{j}): {asym:.3e}")
        if abs(integral - 1.0) > TOLERANCES["unit_integral"]:
            failures.append(f"pair integral ({i},{j}): {integral - 1:.3e}")
    reporting.write_csv(
        out / "tables" / "pair_checks.csv",
        ["i", "j", "symmetry_rel", "integral"],
        pair_rows,
    )

    figures = [
        reporting.fig_univariate_kernel(g, out / "figures" / "univariate_kernel.png"),
        reporting.fig_kernel_heatmap(
            theta_grid.kernels[0], out / "figures" / "structural_kernel.png"
        ),
    ]
    report = {
        "checks": {
            "kernels": len(rows),
            "pairs": len(pair_rows),
            "failures": failures,
        },
        "collection": {
            "m_of_k": theta_grid.constants.m_of_k,
            "sigma_of_k": theta_grid.constants.sigma_of_k,
            "count": theta_grid.constants.count,
            "grid_hash": theta_grid.hash(),
        },
        "figures": figures,
    }
    if failures:
        raise CheckFailure(f"kernel identity checks failed: {failures[0]}", report)
    return report


def cmd_calibrate(cfg: ExperimentConfig, out: Path) -> dict:
    grid, g, theta_grid = _build_setting(cfg)
    kappa = _kappa(cfg, theta_grid)
    reporting.write_json(out / "calibration.json", kappa.to_record())
    figures = []
    if kappa.samples_single is not None:
        reporting.write_csv(
            out / "tables" / "calibration_samples.csv",
            ["replication", "sup_single", "sup_pair"],
            [
                {"replication": r, "sup_single": s1, "sup_pair": s2}
                for r, (s1, s2) in enumerate(
                    zip(kappa.samples_single, kappa.samples_pair)
                )
            ],
        )
        figures.append(
            reporting.fig_calibration(
                kappa.samples_single,
                kappa.samples_pair,
                kappa.kappa,
                out / "figures" / "calibration.png",
            )
        )
    return {"calibration": kappa.to_record(), "figures": figures}


def cmd_select(cfg: ExperimentConfig, out: Path) -> dict:
    grid, g, theta_grid = _build_setting(cfg)
    engine = theta_grid.engine(workers=cfg.threads)
    kappa = _kappa(cfg, theta_grid, engine=engine)
    f = make_test_function(cfg.function)
    f_field = sample_function(f, grid)
    obs = Observation(
        signal=f_field,
        noise=draw_noise(grid, derive_seed(cfg.seed, "obs")),
        eps=cfg.eps,
        seed=cfg.seed,
    )
    result = select(obs, theta_grid, cfg.p_value(), kappa, engine=engine)
    rows = result.objective_rows(theta_grid)
    reporting.write_csv(
        out / "tables" / "objective.csv",
        ["theta_id", "partition", "angles", "bandwidth", "bhat", "sigma_sup", "objective"],
        rows,
    )
    err = result.estimate.values.values - f_field.values
    from .grid import Field

    true_risk = lp_norm(Field(grid, err), cfg.p_value(), "inner")
    figures = [reporting.fig_objective(rows, out / "figures" / "objective.png")]
    return {
        "selected": result.theta_hat.describe(),
        "selected_index": result.theta_index,
        "objective": float(result.objective_table[result.theta_index]),
        "true_error_norm": true_risk,
        "kappa": kappa.to_record(),
        "figures": figures,
    }


def cmd_bench_oracle(cfg: ExperimentConfig, out: Path) -> dict:
    grid, g, theta_grid = _build_setting(cfg)
    engine = theta_grid.engine(workers=cfg.threads)
    kappa = _kappa(cfg, theta_grid, engine=engine)
    f = make_test_function(cfg.function)
    report = verify_oracle_inequality(
        f,
        theta_grid,
        cfg.eps,
        cfg.p_value(),
        kappa,
        cfg.n_rep,
        derive_seed(cfg.seed, "oracle-bench"),
        engine=engine,
    )
    f_field = sample_function(f, grid)
    _, _, bias_norms, objective = oracle_objective(
        f_field, theta_grid, cfg.eps, kappa.kappa, cfg.p_value(), engine=engine
    )
    reporting.write_csv(
        out / "tables" / "oracle_objective.csv",
        ["theta_id", "bias_norm", "sigma_sup", "objective"],
        [
            {
                "theta_id": i,
                "bias_norm": bias_norms[i],
                "sigma_sup": engine.sigma_single[i],
                "objective": objective[i],
            }
            for i in range(len(theta_grid))
        ],
    )
    figures = [reporting.fig_oracle_ratio(report, out / "figures" / "oracle_ratio.png")]
    report["figures"] = figures
    report["kappa"] = kappa.to_record()
    if not report["passes"]:
        raise CheckFailure(
            f"oracle risk bound exceeded: risk {report['risk']:.4f} vs "
            f"bound {report['rhs']:.4f} (ratio CI low {report['ratio_ci_low']:.3f} > 1)",
            report,
        )
    return report


def cmd_bench_rate(cfg: ExperimentConfig, out: Path) -> dict:
    grid = make_grid(cfg.dim, cfg.resolved_points(), cfg.resolved_half_width())
    g = build_univariate_kernel(cfg.kernel_order)
    rate = rate_experiment(
        cfg.function,
        cfg.rate_beta,
        cfg.eps_list,
        grid,
        _structure_config(cfg),
        g,
        cfg.p_value(),
        cfg.n_rep,
        cfg.n_cal,
        _effective_delta(cfg),
        derive_seed(cfg.seed, "rate"),
        beta_max=cfg.beta_max,
        workers=cfg.threads,
    )
    report = rate.to_dict()
    rows = [
        {
            "eps": e,
            "risk": r,
            "ci": c,
            "fixed_oracle_risk": fr,
            "phi": ph,
            "risk_over_phi": r / ph,
            "adaptation_ratio": r / fr,
            "kappa": kp,
        }
        for e, r, c, fr, ph, kp in zip(
            report["eps_list"],
            report["risks"],
            report["risk_cis"],
            report["fixed_risks"],
            report["phi_values"],
            report["kappas"],
        )
    ]
    reporting.write_csv(
        out / "tables" / "rate.csv",
        ["eps", "risk", "ci", "fixed_oracle_risk", "phi", "risk_over_phi",
         "adaptation_ratio", "kappa"],
        rows,
    )
    report["figures"] = [reporting.fig_rate(report, out / "figures" / "rate.png")]
    slope_err = abs(rate.fitted_slope - rate.target_exponent)
    if slope_err > TOLERANCES["rate_slope_window"]:
        raise CheckFailure(
            f"rate slope {rate.fitted_slope:.3f} outside "
            f"{rate.target_exponent:.3f} +- {TOLERANCES['rate_slope_window']}",
            report,
        )
    worst = max(r / fr for r, fr in zip(report["risks"], report["fixed_risks"]))
    if worst > TOLERANCES["adaptation_factor"]:
        raise CheckFailure(
            f"adaptation cost {worst:.2f}x exceeds {TOLERANCES['adaptation_factor']}x "
            "the aligned fixed-oracle risk",
            report,
        )
    return report


def cmd_bench_sandwich(cfg: ExperimentConfig, out: Path) -> dict:
    grid, g, theta_grid = _build_setting(cfg)
    f = make_test_function(cfg.function)
    f_field = sample_function(f, grid)
    if cfg.sandwich_h:
        h_values = list(cfg.sandwich_h)
    else:
        h_values = list(np.geomspace(theta_grid.h_min, theta_grid.h_max, 5))
    rows = []
    p_list = [1.0, 2.0, np.inf]
    from .kernels import ThetaPoint

    for h in h_values:
        theta = ThetaPoint(
            partition=f.true_partition,
            directions=f.true_directions,
            bandwidth=tuple(float(h) for _ in range(cfg.dim)),
            min_det=cfg.eta,
        )
        kernel = build_structural_kernel(theta, g, grid)
        for rec in risk_sandwich(
            kernel,
            f_field,
            cfg.eps,
            p_list,
            cfg.n_rep,
            cfg.n_noise,
            derive_seed(cfg.seed, "sandwich", reporting.fmt(h)),
        ):
            rec["h"] = float(h)
            rec["label"] = f"h={h:.3g},p={rec['p']}"
            rows.append(rec)
    reporting.write_csv(
        out / "tables" / "sandwich.csv",
        ["h", "p", "bias_norm", "noise_norm_mean", "noise_norm_ci", "risk",
         "risk_ci", "lower", "upper", "lower_ok", "upper_ok"],
        rows,
    )
    figures = [reporting.fig_sandwich(rows, out / "figures" / "sandwich.png")]
    bad = [r for r in rows if not (r["lower_ok"] and r["upper_ok"])]
    report = {"rows": rows, "violations": len(bad), "figures": figures}
    if bad:
        r = bad[0]
        raise CheckFailure(
            f"risk sandwich violated at h={r['h']:.3g}, p={r['p']}: "
            f"risk {r['risk']:.4f} outside [{r['lower']:.4f}, {r['upper']:.4f}]",
            report,
        )
    return report


_DISPATCH = {
    "verify-kernels": cmd_verify_kernels,
    "calibrate": cmd_calibrate,
    "select": cmd_select,
    "bench-oracle": cmd_bench_oracle,
    "bench-rate": cmd_bench_rate,
    "bench-sandwich": cmd_bench_sandwich,
}


def _constants_block(cfg: ExperimentConfig) -> dict:
    block = {
        "tolerances": dict(TOLERANCES),
        "margin_half_width": cfg.resolved_half_width(),
        "eta": cfg.eta,
        "c3": cfg.c3,
        "delta_effective": _effective_delta(cfg),
        "remainder_exponent_a": remainder_exponent(cfg.dim),
        "variance_floor": 1.0,
    }
    if 0.0 < cfg.eps < 1.0:
        h_lo, h_hi = bandwidth_window(cfg.eps, cfg.beta_max, cfg.dim)
        block["bandwidth_window"] = {"h_min": h_lo, "h_max": h_hi}
    return block


def run(cfg: ExperimentConfig) -> int:
    """Execute one command; write manifest, report, tables and figures."""
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg.resolved_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    status = 0
    try:
        report = _DISPATCH[cfg.command](cfg, out)
        outcome = "ok"
    except CheckFailure as exc:
        message, report = exc.args if len(exc.args) == 2 else (str(exc), {})
        report = dict(report)
        report["failure"] = message
        outcome = "check-failed"
        status = 2
        print(f"FAIL: {message}", file=sys.stderr)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report["outcome"] = outcome
    report["command"] = cfg.command
    report["config_hash"] = cfg.config_hash()
    report["seed"] = cfg.seed
    reporting.write_json(out / "report.json", report)
    manifest = reporting.build_manifest(
        cfg.to_dict(), cfg.config_hash(), cfg.seed, time.time() - t0, _constants_block(cfg)
    )
    reporting.write_json(out / "manifest.json", manifest)
    if status == 0:
        print(f"{cfg.command}: ok (artifacts in {out})")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structadapt",
        description="Structural adaptation experiments for kernel smoothing in white noise",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--command", choices=COMMANDS)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out", dest="out_dir")
    parser.add_argument("--dim", type=int)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--p")
    parser.add_argument("--delta", type=float)
    parser.add_argument("--n-rep", dest="n_rep", type=int)
    parser.add_argument("--n-cal", dest="n_cal", type=int)
    parser.add_argument("--kernel-order", dest="kernel_order", type=int)
    parser.add_argument("--vanishing-delta", dest="vanishing_delta", action="store_true", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = ExperimentConfig.from_json_file(args.config)
        else:
            cfg = ExperimentConfig()
        for key in (
            "command", "seed", "threads", "out_dir", "dim", "eps", "p", "delta",
            "n_rep", "n_cal", "kernel_order", "vanishing_delta",
        ):
            value = getattr(args, key, None)
            if value is not None:
                setattr(cfg, key, value)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
