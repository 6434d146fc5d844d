"""Monte Carlo risk evaluation and the inequality/rate experiments.

All replication randomness is counter-seeded from a master seed and a label
path, so every experiment is reproducible and order-independent.  The bias
path (which consumes the true function) is oracle-only machinery: the
selection rule never sees it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import SelectionEngine
from .estimators import bias_field
from .functions import StructuredFunction, make_test_function
from .grid import (
    Field,
    GridSpec,
    Observation,
    draw_noise,
    inner_norm_tools,
    sample_function,
)
from .kernels import KernelField, ThetaPoint, UnivariateKernel, build_structural_kernel
from .rng import derive_seed
from .selection import (
    KappaCalibration,
    StructureGridConfig,
    ThetaGrid,
    build_theta_grid,
    calibrate_kappa,
)

__all__ = [
    "RiskReport",
    "RateReport",
    "ideal_bandwidth",
    "oracle_objective",
    "mc_risk",
    "mc_risk_fixed",
    "mc_risk_selected",
    "noise_norm_estimate",
    "risk_sandwich",
    "verify_oracle_inequality",
    "rate_experiment",
    "aligned_oracle_theta",
    "adaptive_rate",
    "unstructured_rate_exponent",
]


def adaptive_rate(eps: float, beta: float) -> float:
    """[eps * sqrt(ln(1/eps))]^(2 beta / (2 beta + 1)), the sup-norm benchmark rate."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"rate is defined for eps in (0, 1), got {eps}")
    return float((eps * np.sqrt(np.log(1.0 / eps))) ** (2.0 * beta / (2.0 * beta + 1.0)))


def unstructured_rate_exponent(beta: float, dim: int) -> float:
    """Exponent of the d-dimensional rate without structural assumptions."""
    return 2.0 * beta / (2.0 * beta + dim)


def ideal_bandwidth(
    beta_i: float,
    block_size: int,
    holder_const: float,
    eps: float,
    g: UnivariateKernel,
    dim: int,
) -> float:
    """Bias/variance balancing bandwidth for one block.

    h* = ((eps/L) sqrt(ln(1/eps)))^(2/(2 beta_i + k)) (||g||_2/||g||_1)^(2 d /(2 beta_i + k)).
    """
    if beta_i <= 0 or block_size <= 0 or holder_const <= 0:
        raise ValueError("beta_i, block_size and holder_const must be positive")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    expo = 2.0 / (2.0 * beta_i + block_size)
    base = (eps / holder_const) * np.sqrt(np.log(1.0 / eps))
    return float(base**expo * (g.norm2 / g.norm1) ** (expo * dim))


@dataclass(frozen=True)
class RiskReport:
    """Monte Carlo estimate of E ||estimate - F||_p on the inner cube."""

    estimator_id: str
    p: float
    eps: float
    n_rep: int
    risk: float
    ci_halfwidth: float
    per_rep: np.ndarray = field(repr=False)

    @property
    def sd(self) -> float:
        return float(np.std(self.per_rep, ddof=1)) if self.n_rep > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "estimator_id": self.estimator_id,
            "p": "inf" if self.p == np.inf else self.p,
            "eps": self.eps,
            "n_rep": self.n_rep,
            "risk": self.risk,
            "ci_halfwidth": self.ci_halfwidth,
        }


def _report(estimator_id, p, eps, values: np.ndarray) -> RiskReport:
    n = values.size
    ci = 1.96 * np.std(values, ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return RiskReport(
        estimator_id=estimator_id,
        p=p,
        eps=eps,
        n_rep=n,
        risk=float(np.mean(values)),
        ci_halfwidth=float(ci),
        per_rep=values,
    )


def oracle_objective(
    f_field: Field,
    theta_grid: ThetaGrid,
    eps: float,
    kappa_value: float,
    p: float,
    engine: SelectionEngine | None = None,
) -> tuple:
    """Exhaustive minimum of ||B_theta||_p + kappa eps sigma_theta over the grid.

    Returns (theta_star_index, value, bias_norms, objective_table).  Needs the
    true function; this is the right-hand side reference of the risk bound.
    """
    eng = engine if engine is not None else theta_grid.engine()
    smoothed = eng.smooth_all(f_field.nd())
    f_inner = eng.norm_tools.crop_field(f_field.nd())
    bias_norms = eng.norm_tools.norms(smoothed - f_inner, p, batch=True)
    objective = bias_norms + kappa_value * eps * eng.sigma_single
    idx = int(np.argmin(objective))
    return idx, float(objective[idx]), bias_norms, objective


def mc_risk_fixed(
    kernel: KernelField,
    f_field: Field,
    eps: float,
    p: float,
    n_rep: int,
    seed: int,
    estimator_id: str = "fixed",
) -> RiskReport:
    """Replicated risk of one fixed kernel smoother."""
    if n_rep < 1:
        raise ValueError("n_rep must be positive")
    grid = f_field.grid
    from .grid import _correlate

    tools = inner_norm_tools(grid)
    signal_part = _correlate(f_field.nd(), kernel.patch) * grid.cell_volume
    scale = eps / np.sqrt(grid.cell_volume) * grid.cell_volume
    vals = np.empty(n_rep)
    f_inner = tools.crop_field(f_field.nd())
    for r in range(n_rep):
        if eps == 0.0:
            est_inner = tools.crop_field(signal_part)
        else:
            xi = draw_noise(grid, derive_seed(seed, "rep", r)).nd()
            noise_part = _correlate(xi, kernel.patch) * scale
            est_inner = tools.crop_field(signal_part + noise_part)
        vals[r] = tools.norms(est_inner - f_inner, p)
    return _report(estimator_id, p, eps, vals)


def mc_risk_selected(
    theta_grid: ThetaGrid,
    kappa: KappaCalibration,
    f_field: Field,
    eps: float,
    p: float,
    n_rep: int,
    seed: int,
    engine: SelectionEngine | None = None,
    estimator_id: str = "selected",
) -> tuple:
    """Replicated risk of the selection rule; also returns the chosen indices."""
    if n_rep < 1:
        raise ValueError("n_rep must be positive")
    eng = engine if engine is not None else theta_grid.engine()
    grid = theta_grid.grid
    vals = np.empty(n_rep)
    chosen = np.empty(n_rep, dtype=int)
    f_inner = eng.norm_tools.crop_field(f_field.nd())
    from .selection import _check_calibration, _objective_tables

    _check_calibration(theta_grid, kappa, p)
    for r in range(n_rep):
        noise = draw_noise(grid, derive_seed(seed, "rep", r))
        obs = Observation(signal=f_field, noise=noise, eps=eps, seed=seed)
        working = obs.working_field().nd()
        scan = eng.scan(working, p, want_fields=True)
        _, objective = _objective_tables(scan.pair_diff_norms, eng, eps, kappa.kappa)
        idx = int(np.argmin(objective))
        chosen[r] = idx
        est_inner = eng.norm_tools.crop_field(scan.single_fields[idx])
        vals[r] = eng.norm_tools.norms(est_inner - f_inner, p)
    return _report(estimator_id, p, eps, vals), chosen


def mc_risk(procedure: str, **kwargs):
    """Dispatch on 'fixed' or 'selected'."""
    if procedure == "fixed":
        return mc_risk_fixed(**kwargs)
    if procedure == "selected":
        return mc_risk_selected(**kwargs)[0]
    raise ValueError(f"unknown procedure {procedure!r}")


def noise_norm_estimate(
    kernel: KernelField, grid: GridSpec, p: float, n_draws: int, seed: int
) -> tuple:
    """Monte Carlo estimate of E ||Z_theta||_p (unit noise level) with its CI."""
    from .grid import _correlate

    tools = inner_norm_tools(grid)
    scale = grid.cell_volume / np.sqrt(grid.cell_volume)
    vals = np.empty(n_draws)
    for r in range(n_draws):
        xi = draw_noise(grid, derive_seed(seed, "noise", r)).nd()
        z = _correlate(xi, kernel.patch) * scale
        vals[r] = tools.norms(tools.crop_field(z), p)
    ci = 1.96 * np.std(vals, ddof=1) / np.sqrt(n_draws) if n_draws > 1 else 0.0
    return float(np.mean(vals)), float(ci)


def risk_sandwich(
    kernel: KernelField,
    f_field: Field,
    eps: float,
    p_list,
    n_rep: int,
    n_noise: int,
    seed: int,
) -> list:
    """Check 1/4 (||B|| + eps E||Z||) <= risk <= ||B|| + eps E||Z|| per norm index.

    Draws are shared across the requested p values.  Each row reports both
    bounds, the Monte Carlo risk, and whether each side holds within the
    combined confidence intervals.
    """
    grid = f_field.grid
    from .grid import _correlate

    bias = bias_field(kernel, f_field)
    tools = inner_norm_tools(grid)
    signal_part = _correlate(f_field.nd(), kernel.patch) * grid.cell_volume
    noise_scale = grid.cell_volume / np.sqrt(grid.cell_volume)
    f_inner = tools.crop_field(f_field.nd())

    p_list = list(p_list)
    risk_vals = {p: np.empty(n_rep) for p in p_list}
    for r in range(n_rep):
        xi = draw_noise(grid, derive_seed(seed, "rep", r)).nd()
        est_inner = tools.crop_field(
            signal_part + eps * _correlate(xi, kernel.patch) * noise_scale
        )
        for p in p_list:
            risk_vals[p][r] = tools.norms(est_inner - f_inner, p)

    z_vals = {p: np.empty(n_noise) for p in p_list}
    for r in range(n_noise):
        xi = draw_noise(grid, derive_seed(seed, "noise", r)).nd()
        z_inner = tools.crop_field(_correlate(xi, kernel.patch) * noise_scale)
        for p in p_list:
            z_vals[p][r] = tools.norms(z_inner, p)

    rows = []
    for p in p_list:
        b_norm = bias.norm(p)
        z_mean = float(np.mean(z_vals[p]))
        z_ci = 1.96 * float(np.std(z_vals[p], ddof=1)) / np.sqrt(n_noise)
        risk = float(np.mean(risk_vals[p]))
        risk_ci = 1.96 * float(np.std(risk_vals[p], ddof=1)) / np.sqrt(n_rep)
        upper = b_norm + eps * z_mean
        lower = 0.25 * upper
        lower_ok = risk + risk_ci >= lower - 0.25 * eps * z_ci
        upper_ok = risk - risk_ci <= upper + eps * z_ci
        rows.append(
            {
                "p": "inf" if p == np.inf else p,
                "bias_norm": b_norm,
                "noise_norm_mean": z_mean,
                "noise_norm_ci": z_ci,
                "risk": risk,
                "risk_ci": risk_ci,
                "lower": lower,
                "upper": upper,
                "lower_ok": bool(lower_ok),
                "upper_ok": bool(upper_ok),
            }
        )
    return rows


def remainder_term(
    sup_norm: float,
    m_of_k: float,
    sigma_of_k: float,
    delta: float,
    zeta_sq_mean: float,
) -> float:
    """||F||_inf (1 + M) delta + sigma(K) sqrt(delta) sqrt(E zeta^2)."""
    return sup_norm * (1.0 + m_of_k) * delta + sigma_of_k * np.sqrt(delta) * np.sqrt(
        zeta_sq_mean
    )


def verify_oracle_inequality(
    f: StructuredFunction,
    theta_grid: ThetaGrid,
    eps: float,
    p: float,
    kappa: KappaCalibration,
    n_rep: int,
    seed: int,
    engine: SelectionEngine | None = None,
) -> dict:
    """Compare the selected-estimator risk against the oracle bound.

    LHS: Monte Carlo risk of the selection rule.  RHS: [3 + 2 M] times the
    oracle objective plus the remainder term evaluated with the known sup
    norm of F and the calibrated E[zeta^2].  Reports the ratio; the bound
    holds when the ratio is at most 1 within the Monte Carlo CI.
    """
    eng = engine if engine is not None else theta_grid.engine()
    f_field = sample_function(f, theta_grid.grid)
    report, chosen = mc_risk_selected(
        theta_grid, kappa, f_field, eps, p, n_rep, seed, engine=eng
    )
    star_idx, star_value, bias_norms, _ = oracle_objective(
        f_field, theta_grid, eps, kappa.kappa, p, engine=eng
    )
    zeta_sq = kappa.zeta_sq_mean
    if not np.isfinite(zeta_sq):
        zeta_sq = _zeta_sq_estimate(theta_grid, eng, seed)
    sup_norm = min(f.sup_norm_bound, float(np.max(np.abs(f_field.values))) * 1.001)
    m_k = eng.constants.m_of_k
    r_delta = remainder_term(
        sup_norm, m_k, eng.constants.sigma_of_k, kappa.delta, zeta_sq
    )
    rhs = (3.0 + 2.0 * m_k) * star_value + r_delta
    ratio = report.risk / rhs
    ratio_low = (report.risk - report.ci_halfwidth) / rhs
    return {
        "risk": report.risk,
        "risk_ci": report.ci_halfwidth,
        "oracle_index": star_idx,
        "oracle_value": star_value,
        "oracle_bias_norm": float(bias_norms[star_idx]),
        "constant": 3.0 + 2.0 * m_k,
        "remainder": float(r_delta),
        "rhs": float(rhs),
        "ratio": float(ratio),
        "ratio_ci_low": float(ratio_low),
        "passes": bool(ratio_low <= 1.0),
        "selected_counts": np.bincount(chosen, minlength=len(theta_grid)).tolist(),
    }


def _zeta_sq_estimate(theta_grid: ThetaGrid, eng: SelectionEngine, seed: int, n: int = 100) -> float:
    vals = np.empty(n)
    for r in range(n):
        xi = draw_noise(theta_grid.grid, derive_seed(seed, "zeta", r))
        _, _, vals[r] = eng.noise_suprema(xi.nd(), np.inf)
    return float(np.mean(vals**2))


def aligned_oracle_theta(
    f: StructuredFunction,
    eps: float,
    g: UnivariateKernel,
    h_max: float,
    eta: float = 1e-3,
    h_floor: float = 0.0,
) -> ThetaPoint:
    """The fixed-oracle hypothesis: true structure with the balancing bandwidth.

    Blocks with a zero component carry no bias at any bandwidth, so they get
    the widest allowed bandwidth; active blocks get the closed-form balance
    value clamped into [h_floor, h_max] (the floor keeps the bandwidth
    resolvable on a finite lattice).
    """
    h_axis = [0.0] * f.dim
    for block, comp in zip(f.true_partition, f.components):
        if comp.holder_const > 0:
            h_star = ideal_bandwidth(
                comp.beta_i, len(block), comp.holder_const, eps, g, f.dim
            )
            h_val = min(max(h_star, h_floor), h_max)
        else:
            h_val = h_max
        for j in block:
            h_axis[j] = h_val
    return ThetaPoint(
        partition=f.true_partition,
        directions=f.true_directions,
        bandwidth=tuple(h_axis),
        min_det=eta,
        angles=(),
    )


@dataclass(frozen=True)
class RateReport:
    """Log-log rate fit of the selected estimator against the benchmark rate."""

    beta: float
    p: float
    eps_list: tuple
    risks: tuple
    risk_cis: tuple
    fixed_risks: tuple
    phi_values: tuple
    kappas: tuple
    fitted_slope: float
    target_exponent: float
    unstructured_exponent: float

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "p": "inf" if self.p == np.inf else self.p,
            "eps_list": list(self.eps_list),
            "risks": list(self.risks),
            "risk_cis": list(self.risk_cis),
            "fixed_risks": list(self.fixed_risks),
            "phi_values": list(self.phi_values),
            "kappas": list(self.kappas),
            "fitted_slope": self.fitted_slope,
            "target_exponent": self.target_exponent,
            "unstructured_exponent": self.unstructured_exponent,
            "adaptation_ratios": [
                r / fr for r, fr in zip(self.risks, self.fixed_risks)
            ],
        }


def rate_experiment(
    family_spec: dict,
    beta: float,
    eps_list,
    grid: GridSpec,
    config: StructureGridConfig,
    g: UnivariateKernel,
    p: float,
    n_rep: int,
    n_cal: int,
    delta: float,
    seed: int,
    beta_max: float = 2.0,
    workers: int = 1,
) -> RateReport:
    """Run the full selection pipeline across a noise-level ladder.

    With an explicit bandwidth window the hypothesis grid is shared by all
    noise levels, so the threshold is calibrated once and each replication's
    noise draw is scanned once and recombined linearly per level (common
    random numbers across the ladder).  With a noise-dependent window the
    grid and calibration are rebuilt per level.
    """
    eps_list = list(eps_list)
    if len(eps_list) < 2:
        raise ValueError("need at least two noise levels to fit a slope")
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    spec = dict(family_spec)
    spec["beta"] = beta
    f = make_test_function(spec)
    f_field = sample_function(f, grid)
    shared_window = config.h_min is not None and config.h_max is not None

    if shared_window:
        risks, cis, fixed_risks, kappas = _rate_shared_window(
            f, f_field, eps_list, grid, config, g, p, n_rep, n_cal, delta, seed, workers
        )
    else:
        risks, cis, fixed_risks, kappas = _rate_per_eps(
            f, f_field, eps_list, grid, config, g, p, n_rep, n_cal, delta, seed,
            beta_max, workers,
        )
    phis = [adaptive_rate(eps, beta) for eps in eps_list]
    slope = float(np.polyfit(np.log(eps_list), np.log(risks), 1)[0])
    return RateReport(
        beta=beta,
        p=p,
        eps_list=tuple(eps_list),
        risks=tuple(risks),
        risk_cis=tuple(cis),
        fixed_risks=tuple(fixed_risks),
        phi_values=tuple(phis),
        kappas=tuple(kappas),
        fitted_slope=slope,
        target_exponent=2.0 * beta / (2.0 * beta + 1.0),
        unstructured_exponent=unstructured_rate_exponent(beta, grid.dim),
    )


def _rate_shared_window(
    f, f_field, eps_list, grid, config, g, p, n_rep, n_cal, delta, seed, workers
):
    from .grid import _correlate
    from .selection import _objective_tables

    theta_grid = build_theta_grid(config, grid, g, eps_list[0])
    eng = theta_grid.engine(workers=workers)
    kappa = calibrate_kappa(
        theta_grid, p, delta, n_cal, derive_seed(seed, "rate-cal"), engine=eng
    )
    signal_parts = eng.linear_parts(f_field.nd())
    tools = eng.norm_tools
    f_inner = tools.crop_field(f_field.nd())
    dv = grid.cell_volume

    star_kernels = []
    star_signal = []
    for eps in eps_list:
        star = aligned_oracle_theta(
            f, eps, g, theta_grid.h_max, config.eta, h_floor=3.0 * grid.spacing
        )
        sk = build_structural_kernel(star, g, grid)
        star_kernels.append(sk)
        star_signal.append(tools.crop_field(_correlate(f_field.nd(), sk.patch) * dv))

    sel = np.empty((len(eps_list), n_rep))
    fixed = np.empty((len(eps_list), n_rep))
    for r in range(n_rep):
        xi = draw_noise(grid, derive_seed(seed, "rate-rep", r)).nd()
        noise_parts = eng.linear_parts(xi)
        for k, eps in enumerate(eps_list):
            pair_norms, singles = eng.combine_parts(signal_parts, noise_parts, eps, p)
            _, objective = _objective_tables(pair_norms, eng, eps, kappa.kappa)
            idx = int(np.argmin(objective))
            sel[k, r] = tools.norms(singles[idx] - f_inner, p)
            star_noise = tools.crop_field(_correlate(xi, star_kernels[k].patch) * dv)
            est = star_signal[k] + (eps / np.sqrt(dv)) * star_noise
            fixed[k, r] = tools.norms(est - f_inner, p)
    risks = [float(np.mean(sel[k])) for k in range(len(eps_list))]
    cis = [
        float(1.96 * np.std(sel[k], ddof=1) / np.sqrt(n_rep)) for k in range(len(eps_list))
    ]
    fixed_risks = [float(np.mean(fixed[k])) for k in range(len(eps_list))]
    return risks, cis, fixed_risks, [kappa.kappa] * len(eps_list)


def _rate_per_eps(
    f, f_field, eps_list, grid, config, g, p, n_rep, n_cal, delta, seed, beta_max, workers
):
    risks, cis, fixed_risks, kappas = [], [], [], []
    for k, eps in enumerate(eps_list):
        theta_grid = build_theta_grid(config, grid, g, eps, beta_max)
        eng = theta_grid.engine(workers=workers)
        kappa = calibrate_kappa(
            theta_grid, p, delta, n_cal, derive_seed(seed, "rate-cal", k), engine=eng
        )
        rep, _ = mc_risk_selected(
            theta_grid, kappa, f_field, eps, p, n_rep,
            derive_seed(seed, "rate", k), engine=eng,
        )
        star = aligned_oracle_theta(
            f, eps, g, theta_grid.h_max, config.eta, h_floor=3.0 * grid.spacing
        )
        star_kernel = build_structural_kernel(star, g, grid)
        fx = mc_risk_fixed(
            star_kernel, f_field, eps, p, n_rep,
            derive_seed(seed, "rate-fixed", k), estimator_id="aligned-oracle",
        )
        risks.append(rep.risk)
        cis.append(rep.ci_halfwidth)
        fixed_risks.append(fx.risk)
        kappas.append(kappa.kappa)
    return risks, cis, fixed_risks, kappas
