"""Structure grid, noise-threshold calibration, and the selection rule.

The hypothesis set is the cartesian product of all axis partitions, a grid
of rotations (Givens angles), and a geometric bandwidth grid with one value
per partition block.  The selection objective for a candidate theta is

    bhat(theta) + kappa * eps * sigma_theta

where bhat is a data-driven lower estimate of the smoothing bias p-norm
built from pairwise comparisons of two-stage estimates, and kappa is
calibrated so that, with probability 1 - delta, every normalized stochastic
term stays below it (Monte Carlo quantiles of the two suprema, or the
analytic sqrt(c3 * ln(1/eps)) form when delta is too small to simulate).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np

from .engine import SelectionEngine
from .estimators import EstimateField
from .grid import Field, GridSpec, Observation, draw_noise
from .kernels import (
    CollectionConstants,
    ThetaPoint,
    UnivariateKernel,
    build_structural_kernel,
    collection_constants,
)
from .rng import derive_seed

__all__ = [
    "StructureGridConfig",
    "ThetaGrid",
    "KappaCalibration",
    "SelectionResult",
    "set_partitions",
    "rotation_grid",
    "build_theta_grid",
    "bandwidth_window",
    "remainder_exponent",
    "calibrate_kappa",
    "bhat",
    "select",
]


def set_partitions(d: int) -> list:
    """All partitions of axes {0..d-1} as tuples of sorted blocks.

    Enumerated by restricted-growth strings in lexicographic order, which is
    deterministic and stable (d = 1, 2, 3 give 1, 2, 5 partitions).
    """
    results = []

    def grow(assignment, next_block):
        if len(assignment) == d:
            blocks = [[] for _ in range(next_block)]
            for axis, b in enumerate(assignment):
                blocks[b].append(axis)
            results.append(tuple(tuple(b) for b in blocks))
            return
        for b in range(next_block + 1):
            grow(assignment + [b], next_block + (1 if b == next_block else 0))

    grow([], 0)
    return results


def _givens(d: int, i: int, j: int, angle: float) -> np.ndarray:
    g = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    g[i, i] = c
    g[j, j] = c
    g[i, j] = -s
    g[j, i] = s
    return g


def rotation_grid(d: int, n_angles: int) -> list:
    """Orthogonal direction matrices from Givens rotations on a uniform angle grid.

    Angles run over k * pi / n_angles; d = 1 has only the identity, d >= 2
    takes the product over coordinate pairs.  Orthogonality keeps unit
    columns and |det| = 1 exactly (up to rounding), so the determinant floor
    is automatic.
    """
    if n_angles < 1:
        raise ValueError("n_angles must be positive")
    if d == 1:
        return [((), np.eye(1))]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    angles_1d = [k * np.pi / n_angles for k in range(n_angles)]
    out = []
    for combo in iproduct(angles_1d, repeat=len(pairs)):
        e = np.eye(d)
        for (i, j), a in zip(pairs, combo):
            e = e @ _givens(d, i, j, a)
        out.append((tuple(combo), e))
    return out


@dataclass(frozen=True)
class StructureGridConfig:
    """Parameters of the hypothesis grid discretization."""

    dim: int
    n_angles: int = 4
    n_h: int = 4
    eta: float = 1e-3
    kernel_order: int = 2
    h_min: float | None = None  # None: vanishing-delta eps**2
    h_max: float | None = None  # None: vanishing-delta eps**(2 / ((2 beta_max + 1) d))


@dataclass(frozen=True)
class ThetaGrid:
    """The finite hypothesis set with its kernel cache and collection constants."""

    grid: GridSpec
    g: UnivariateKernel
    points: tuple
    kernels: tuple = field(repr=False)
    constants: CollectionConstants
    h_min: float
    h_max: float
    structural_count: int
    continuous_radius: float
    config: StructureGridConfig

    def __len__(self) -> int:
        return len(self.points)

    def hash(self) -> str:
        """Stable identity of the discretization (for calibration reuse checks)."""
        payload = {
            "dim": self.grid.dim,
            "n": self.grid.points_per_axis,
            "W": round(self.grid.half_width, 12),
            "order": self.g.order,
            "points": [
                [p.describe()["partition"], p.describe()["angles"], p.describe()["bandwidth"]]
                for p in self.points
            ],
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def engine(self, workers: int = 1) -> SelectionEngine:
        return SelectionEngine(self.grid, list(self.kernels), workers=workers)


def bandwidth_window(eps: float, beta_max: float, dim: int) -> tuple:
    """The bandwidth window h_min = eps^2, h_max = eps^(2/((2 beta_max + 1) d))."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1) for the bandwidth window, got {eps}")
    return eps**2, eps ** (2.0 / ((2.0 * beta_max + 1.0) * dim))


def remainder_exponent(dim: int) -> float:
    """Exponent a of the vanishing confidence level delta = eps^a."""
    return 24.0 * dim**3 + 12.0 * dim**2


def build_theta_grid(
    config: StructureGridConfig,
    grid: GridSpec,
    g: UnivariateKernel,
    eps: float,
    beta_max: float = 2.0,
) -> ThetaGrid:
    """Discretize the hypothesis set and precompute every kernel.

    Bandwidths are block-constant: each partition block draws one value from
    a geometric grid between h_min and h_max (endpoints exact).  Points are
    deduplicated with stable first-occurrence order.
    """
    if config.dim != grid.dim:
        raise ValueError("config dimension does not match grid")
    if config.dim > 3:
        raise ValueError("structure grids are desk scale: dim must be 1, 2 or 3")
    if config.n_h < 1:
        raise ValueError("n_h must be positive")
    h_min = config.h_min if config.h_min is not None else bandwidth_window(eps, beta_max, config.dim)[0]
    h_max = config.h_max if config.h_max is not None else bandwidth_window(eps, beta_max, config.dim)[1]
    if not h_min < h_max or h_max > 1.0:
        raise ValueError(
            f"bandwidth window [{h_min}, {h_max}] is empty or exceeds 1 "
            f"(eps too large for the bandwidth window)"
        )
    if config.n_h == 1:
        h_values = np.array([h_max])
    else:
        h_values = np.geomspace(h_min, h_max, config.n_h)
        h_values[0], h_values[-1] = h_min, h_max
    partitions = set_partitions(config.dim)
    rotations = rotation_grid(config.dim, config.n_angles)

    points = []
    seen = set()
    for part in partitions:
        for angles, e in rotations:
            for combo in iproduct(range(len(h_values)), repeat=len(part)):
                h_axis = [0.0] * config.dim
                for block, hi in zip(part, combo):
                    for j in block:
                        h_axis[j] = float(h_values[hi])
                theta = ThetaPoint(
                    partition=part,
                    directions=e,
                    bandwidth=tuple(h_axis),
                    min_det=config.eta,
                    angles=angles,
                )
                k = theta.key()
                if k not in seen:
                    seen.add(k)
                    points.append(theta)
    if not points:
        raise ValueError("empty structure grid")

    kernels = tuple(build_structural_kernel(th, g, grid) for th in points)
    constants = collection_constants(list(kernels))
    radius = 1.0
    for th in points:
        block = np.array(list(th.angles) + list(th.bandwidth))
        radius = max(radius, float(np.linalg.norm(block)))
    return ThetaGrid(
        grid=grid,
        g=g,
        points=tuple(points),
        kernels=kernels,
        constants=constants,
        h_min=float(h_min),
        h_max=float(h_max),
        structural_count=len(partitions),
        continuous_radius=radius,
        config=config,
    )


@dataclass(frozen=True)
class KappaCalibration:
    """The deviation threshold for normalized stochastic terms.

    Monte Carlo mode: kappa is the larger of the two empirical
    (1 - delta/2)-quantiles of S1 = sup_theta ||Z~_theta||_p and
    S2 = sup_pairs ||Z~_{theta,nu}||_p, which suffices for the two tail
    probabilities to sum to at most delta.  Analytic mode: sqrt(c3 ln(1/eps)).
    """

    p: float
    delta: float
    kappa: float
    mode: str
    n_cal: int
    grid_hash: str
    seed: int
    quantile_single: float = float("nan")
    quantile_pair: float = float("nan")
    zeta_sq_mean: float = float("nan")  # E[zeta^2], zeta = sup normalized noise
    samples_single: np.ndarray | None = field(default=None, repr=False)
    samples_pair: np.ndarray | None = field(default=None, repr=False)

    def to_record(self) -> dict:
        return {
            "p": "inf" if self.p == np.inf else self.p,
            "delta": self.delta,
            "kappa": self.kappa,
            "mode": self.mode,
            "n_cal": self.n_cal,
            "grid_hash": self.grid_hash,
            "seed": self.seed,
            "quantile_single": self.quantile_single,
            "quantile_pair": self.quantile_pair,
            "zeta_sq_mean": self.zeta_sq_mean,
        }

    @classmethod
    def from_record(cls, record: dict) -> "KappaCalibration":
        """Rebuild a calibration from its JSON record (samples not retained).

        The grid hash travels with the record, so reuse against a different
        structure grid is still rejected.
        """
        rec = dict(record)
        p = np.inf if rec["p"] in ("inf", None) else float(rec["p"])
        def _num(key):
            v = rec.get(key)
            return float("nan") if v is None else float(v)
        return cls(
            p=p,
            delta=float(rec["delta"]),
            kappa=float(rec["kappa"]),
            mode=str(rec["mode"]),
            n_cal=int(rec["n_cal"]),
            grid_hash=str(rec["grid_hash"]),
            seed=int(rec["seed"]),
            quantile_single=_num("quantile_single"),
            quantile_pair=_num("quantile_pair"),
            zeta_sq_mean=_num("zeta_sq_mean"),
        )


def _quantile_order_stat(samples: np.ndarray, level: float) -> float:
    """Upper empirical quantile as the ceil(level * n)-th order statistic."""
    n = samples.size
    k = int(np.ceil(level * n))
    k = min(max(k, 1), n)
    return float(np.sort(samples)[k - 1])


def calibrate_kappa(
    theta_grid: ThetaGrid,
    p: float,
    delta: float,
    n_cal: int,
    seed: int,
    mode: str = "monte-carlo",
    eps: float | None = None,
    c3: float = 8.0,
    workers: int = 1,
    engine: SelectionEngine | None = None,
) -> KappaCalibration:
    """Calibrate the noise threshold for a given grid and norm index."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if mode == "analytic":
        if eps is None or not 0.0 < eps < 1.0:
            raise ValueError("analytic mode needs a noise level in (0, 1)")
        kappa = float(np.sqrt(c3 * np.log(1.0 / eps)))
        return KappaCalibration(
            p=p,
            delta=delta,
            kappa=kappa,
            mode="analytic",
            n_cal=0,
            grid_hash=theta_grid.hash(),
            seed=seed,
        )
    if mode != "monte-carlo":
        raise ValueError(f"unknown calibration mode {mode!r}")
    min_n = int(np.ceil(20.0 / delta))
    if n_cal < min_n:
        raise ValueError(
            f"n_cal = {n_cal} cannot resolve the (1 - delta/2) quantile; "
            f"need at least ceil(20/delta) = {min_n}"
        )
    eng = engine if engine is not None else theta_grid.engine(workers=workers)
    s1 = np.empty(n_cal)
    s2 = np.empty(n_cal)
    zeta = np.empty(n_cal)
    grid = theta_grid.grid
    for r in range(n_cal):
        xi = draw_noise(grid, derive_seed(seed, "cal", r))
        s1[r], s2[r], zeta[r] = eng.noise_suprema(xi.nd(), p)
    level = 1.0 - delta / 2.0
    q1 = _quantile_order_stat(s1, level)
    q2 = _quantile_order_stat(s2, level)
    return KappaCalibration(
        p=p,
        delta=delta,
        kappa=max(q1, q2),
        mode="monte-carlo",
        n_cal=n_cal,
        grid_hash=theta_grid.hash(),
        seed=seed,
        quantile_single=q1,
        quantile_pair=q2,
        zeta_sq_mean=float(np.mean(zeta**2)),
        samples_single=s1,
        samples_pair=s2,
    )


def _check_calibration(theta_grid: ThetaGrid, kappa: KappaCalibration, p: float) -> None:
    if kappa.grid_hash != theta_grid.hash():
        raise ValueError("calibration was computed for a different structure grid")
    if not (kappa.p == p or (np.isinf(kappa.p) and np.isinf(p))):
        raise ValueError(f"calibration is for p = {kappa.p}, requested p = {p}")


@dataclass(frozen=True)
class SelectionResult:
    """Selected hypothesis with the full objective diagnostics."""

    theta_hat: ThetaPoint
    theta_index: int
    objective_table: np.ndarray = field(repr=False)
    bhat_table: np.ndarray = field(repr=False)
    sigma_table: np.ndarray = field(repr=False)
    estimate: EstimateField
    kappa: KappaCalibration

    def objective_rows(self, theta_grid: ThetaGrid) -> list:
        rows = []
        for i, th in enumerate(theta_grid.points):
            d = th.describe()
            rows.append(
                {
                    "theta_id": i,
                    "partition": ";".join(
                        "+".join(str(j) for j in b) for b in d["partition"]
                    ),
                    "angles": ";".join(format(a, ".12g") for a in d["angles"]),
                    "bandwidth": ";".join(format(h, ".12g") for h in d["bandwidth"]),
                    "bhat": self.bhat_table[i],
                    "sigma_sup": self.sigma_table[i],
                    "objective": self.objective_table[i],
                }
            )
        return rows


def _objective_tables(
    scan_pair_norms: np.ndarray,
    engine: SelectionEngine,
    eps: float,
    kappa_value: float,
) -> tuple:
    m_k = engine.constants.m_of_k
    slack = scan_pair_norms - eps * kappa_value * engine.sigma_pair
    bhat_vec = slack.max(axis=1) / m_k
    objective = bhat_vec + kappa_value * eps * engine.sigma_single
    return bhat_vec, objective


def bhat(
    theta_index: int,
    obs: Observation,
    theta_grid: ThetaGrid,
    kappa: KappaCalibration,
    p: float,
    engine: SelectionEngine | None = None,
) -> float:
    """Lower estimate of the bias p-norm of one candidate (may be negative).

    max over the grid of the pairwise difference norms after removing the
    calibrated noise allowance, divided by the collection constant.  No
    clamping at zero: the selection objective uses the raw value.
    """
    _check_calibration(theta_grid, kappa, p)
    if not 0 <= theta_index < len(theta_grid):
        raise IndexError(f"theta_index {theta_index} outside the grid")
    eng = engine if engine is not None else theta_grid.engine()
    scan = eng.scan(obs.working_field().nd(), p)
    bhat_vec, _ = _objective_tables(scan.pair_diff_norms, eng, obs.eps, kappa.kappa)
    return float(bhat_vec[theta_index])


def select(
    obs: Observation,
    theta_grid: ThetaGrid,
    p: float,
    kappa: KappaCalibration,
    engine: SelectionEngine | None = None,
) -> SelectionResult:
    """Exhaustive scan of the selection objective; first index wins ties."""
    _check_calibration(theta_grid, kappa, p)
    eng = engine if engine is not None else theta_grid.engine()
    scan = eng.scan(obs.working_field().nd(), p, want_fields=True)
    bhat_vec, objective = _objective_tables(
        scan.pair_diff_norms, eng, obs.eps, kappa.kappa
    )
    idx = int(np.argmin(objective))  # np.argmin returns the first minimizer
    est = EstimateField(
        theta=theta_grid.points[idx],
        values=Field(theta_grid.grid, scan.single_fields[idx].reshape(-1)),
        sigma_sup=float(eng.sigma_single[idx]),
        valid_radius_nodes=theta_grid.kernels[idx].radius_nodes,
    )
    return SelectionResult(
        theta_hat=theta_grid.points[idx],
        theta_index=idx,
        objective_table=objective,
        bhat_table=bhat_vec,
        sigma_table=eng.sigma_single.copy(),
        estimate=est,
        kappa=kappa,
    )
