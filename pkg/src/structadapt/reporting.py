"""Artifact emission: delimited tables, JSON reports, manifests and figures.

Numeric CSV cells are pinned to 12 significant digits so that reruns with
the same manifest produce byte-identical columns.  Figures are rendered to
files with the Agg backend; they accompany the tables, never replace them.
"""

from __future__ import annotations

import json
import math
import platform
import time
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = [
    "fmt",
    "write_csv",
    "write_json",
    "build_manifest",
    "sanitize",
    "fig_univariate_kernel",
    "fig_kernel_heatmap",
    "fig_calibration",
    "fig_objective",
    "fig_oracle_ratio",
    "fig_rate",
    "fig_sandwich",
]


def fmt(x) -> str:
    """Canonical cell format: 12 significant digits for floats."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(float(x), ".12g")
    return str(x)


def write_csv(path, fieldnames, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(fmt(row[k]) for k in fieldnames))
    path.write_text("\n".join(lines) + "\n")


def sanitize(obj):
    """Make an object JSON-serializable: numpy scalars/arrays, inf handling."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sanitize(obj), indent=2, sort_keys=True) + "\n")


def build_manifest(config_dict: dict, config_hash: str, seed: int, wall_time_s: float, constants: dict) -> dict:
    import scipy

    from . import __version__

    return {
        "config": config_dict,
        "config_hash": config_hash,
        "seed": seed,
        "wall_time_s": wall_time_s,
        "constants": constants,
        "versions": {
            "structadapt": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "created_unix": time.time(),
    }


def _save(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=140, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def fig_univariate_kernel(g, path) -> str:
    xs = np.linspace(-0.6, 0.6, 1201)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(xs, g(xs), lw=1.5)
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel("x")
    ax.set_ylabel("g(x)")
    ax.set_title(f"univariate kernel, {g.order} vanishing moments")
    return _save(fig, path)


def fig_kernel_heatmap(kernel_field, path) -> str:
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    patch = kernel_field.patch
    if patch.ndim == 1:
        r = kernel_field.radius_nodes
        xs = kernel_field.grid.spacing * (np.arange(patch.size) - r)
        ax.plot(xs, patch, lw=1.2)
        ax.set_xlabel("t")
        ax.set_ylabel("K(t)")
    else:
        sl = patch if patch.ndim == 2 else patch[:, :, patch.shape[2] // 2]
        r = kernel_field.radius_nodes * kernel_field.grid.spacing
        im = ax.imshow(sl.T, origin="lower", extent=[-r, r, -r, r], cmap="RdBu_r")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("t1")
        ax.set_ylabel("t2")
    h = ";".join(format(v, ".3g") for v in kernel_field.theta.bandwidth)
    ax.set_title(f"structural kernel, h = {h}")
    return _save(fig, path)


def fig_calibration(samples_single, samples_pair, kappa, path) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    bins = np.histogram_bin_edges(np.concatenate([samples_single, samples_pair]), 30)
    ax.hist(samples_single, bins=bins, alpha=0.55, label="single suprema")
    ax.hist(samples_pair, bins=bins, alpha=0.55, label="pair suprema")
    ax.axvline(kappa, color="k", lw=1.2, ls="--", label=f"kappa = {kappa:.3f}")
    ax.set_xlabel("normalized noise supremum")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    return _save(fig, path)


def fig_objective(rows, path) -> str:
    idx = [r["theta_id"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.2, 3.6))
    ax.plot(idx, [r["objective"] for r in rows], ".-", lw=0.8, label="objective")
    ax.plot(idx, [r["bhat"] for r in rows], ".", ms=3.5, label="bias lower estimate")
    best = min(rows, key=lambda r: r["objective"])
    ax.axvline(best["theta_id"], color="r", lw=0.8, ls=":", label="selected")
    ax.set_xlabel("hypothesis index")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    return _save(fig, path)


def fig_oracle_ratio(report: dict, path) -> str:
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    ax.bar([0], [report["ratio"]], width=0.5, color="#4477aa")
    ax.errorbar(
        [0],
        [report["ratio"]],
        yerr=[[report["ratio"] - report["ratio_ci_low"]], [report["ratio"] - report["ratio_ci_low"]]],
        fmt="none",
        ecolor="k",
        capsize=4,
    )
    ax.axhline(1.0, color="r", lw=1.0, ls="--")
    ax.set_xticks([0])
    ax.set_xticklabels(["risk / bound"])
    ax.set_ylabel("ratio")
    ax.set_title("selected risk vs oracle bound")
    return _save(fig, path)


def fig_rate(report: dict, path) -> str:
    eps = np.asarray(report["eps_list"], dtype=float)
    risks = np.asarray(report["risks"], dtype=float)
    fixed = np.asarray(report["fixed_risks"], dtype=float)
    phi = np.asarray(report["phi_values"], dtype=float)
    slope = report["fitted_slope"]
    target = report["target_exponent"]
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.loglog(eps, risks, "o-", label=f"selected (slope {slope:.3f})")
    ax.loglog(eps, fixed, "s--", label="aligned fixed oracle")
    anchor = risks[0] / eps[0] ** target
    ax.loglog(eps, anchor * eps**target, ":", color="0.4", label=f"slope {target:.3f} reference")
    ax.loglog(eps, phi * risks[0] / phi[0], "-.", color="0.6", label="benchmark rate shape")
    ax.set_xlabel("noise level")
    ax.set_ylabel("sup-norm risk")
    ax.legend(fontsize=8)
    ax.invert_xaxis()
    return _save(fig, path)


def fig_sandwich(rows, path) -> str:
    fig, ax = plt.subplots(figsize=(6.2, 3.8))
    xs = np.arange(len(rows))
    for x, r in zip(xs, rows):
        ax.plot([x, x], [r["lower"], r["upper"]], color="0.6", lw=5, alpha=0.5)
        ax.plot(
            x,
            r["risk"],
            "o",
            color="#cc3311" if not (r["lower_ok"] and r["upper_ok"]) else "#117733",
        )
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{r.get('label', i)}" for i, r in enumerate(rows)], fontsize=7, rotation=30)
    ax.set_ylabel("risk and bounds")
    ax.set_title("risk between bias+noise bounds")
    return _save(fig, path)
