"""Experiment configuration: parsing, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

__all__ = ["ExperimentConfig", "ConfigError", "COMMANDS", "parse_p"]

COMMANDS = (
    "verify-kernels",
    "calibrate",
    "select",
    "bench-oracle",
    "bench-rate",
    "bench-sandwich",
)

_DEFAULT_POINTS = {1: 513, 2: 129, 3: 65}


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending key."""


def parse_p(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return float(np.inf)
        value = float(value)
    value = float(value)
    if not (value == np.inf or value >= 1.0):
        raise ConfigError(f"p: must be 'inf' or a number >= 1, got {value}")
    return value


@dataclass
class ExperimentConfig:
    """One experiment invocation; round-trips losslessly through JSON."""

    command: str = "verify-kernels"
    dim: int = 1
    points_per_axis: int | None = None  # None: per-dimension default
    half_width: float | None = None  # None: 1/2 + sqrt(dim)
    eps: float = 0.1
    eps_list: list = field(default_factory=list)  # bench-rate ladder
    p: str = "inf"
    delta: float = 0.1
    vanishing_delta: bool = False  # delta = eps^a with analytic kappa
    kappa_mode: str = "monte-carlo"
    c3: float = 8.0
    n_angles: int = 4
    n_h: int = 4
    beta_max: float = 2.0
    eta: float = 1e-3
    kernel_order: int = 2
    # Desk-scale defaults; set both to null in a config file to use the
    # noise-scaled window h_min = eps^2, h_max = eps^(2/((2 beta_max + 1) d)),
    # which needs a much finer lattice than the per-dimension defaults.
    h_min: float | None = 0.1
    h_max: float | None = 0.5
    function: dict = field(
        default_factory=lambda: {"family": "single-index", "dim": 1, "beta": 1.0}
    )
    rate_beta: float = 1.0
    n_rep: int = 50
    n_cal: int = 200
    n_noise: int = 300
    sandwich_h: list = field(default_factory=list)  # empty: geometric default
    calibration_file: str = ""  # reuse a previously written calibration record
    seed: int = 20240501
    threads: int = 1
    out_dir: str = ""

    # -- derived ---------------------------------------------------------

    def resolved_points(self) -> int:
        return self.points_per_axis if self.points_per_axis else _DEFAULT_POINTS[self.dim]

    def resolved_half_width(self) -> float:
        return self.half_width if self.half_width is not None else 0.5 + float(np.sqrt(self.dim))

    def resolved_out_dir(self) -> str:
        if self.out_dir:
            return self.out_dir
        return os.environ.get("STRUCTADAPT_OUT", "./out")

    def p_value(self) -> float:
        return parse_p(self.p)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}; one of {COMMANDS}")
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dim: must be 1, 2 or 3, got {self.dim}")
        n = self.resolved_points()
        if n < 9 or n % 2 == 0:
            raise ConfigError(f"points_per_axis: must be odd and >= 9, got {n}")
        margin = 0.5 + float(np.sqrt(self.dim))
        if self.resolved_half_width() < margin - 1e-12:
            raise ConfigError(
                f"half_width: {self.resolved_half_width()} below margin {margin:.6f}"
            )
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError(f"eps: must be in [0, 1), got {self.eps}")
        parse_p(self.p)
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta: must be in (0, 1), got {self.delta}")
        if self.kappa_mode not in ("monte-carlo", "analytic"):
            raise ConfigError(f"kappa_mode: unknown mode {self.kappa_mode!r}")
        if self.n_angles < 1 or self.n_h < 1:
            raise ConfigError("n_angles, n_h: must be positive")
        if not 0 <= self.kernel_order <= 12:
            raise ConfigError(f"kernel_order: must be in [0, 12], got {self.kernel_order}")
        if self.eta <= 0:
            raise ConfigError("eta: must be positive")
        if self.h_min is not None and self.h_max is not None and not self.h_min < self.h_max:
            raise ConfigError(
                f"h_min/h_max: empty bandwidth window [{self.h_min}, {self.h_max}]"
            )
        if self.h_max is not None and self.h_max > 1.0:
            raise ConfigError("h_max: bandwidths above 1 overflow the kernel support")
        if self.command == "bench-rate":
            if len(self.eps_list) < 2:
                raise ConfigError("eps_list: bench-rate needs at least 2 noise levels")
            if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
                raise ConfigError("eps_list: must be strictly decreasing")
            if any(not 0 < e < 1 for e in self.eps_list):
                raise ConfigError("eps_list: entries must be in (0, 1)")
        if self.n_rep < 1 or self.n_cal < 1 or self.n_noise < 1:
            raise ConfigError("n_rep/n_cal/n_noise: must be positive")
        if self.threads < 1:
            raise ConfigError("threads: must be positive")
        if not isinstance(self.function, dict) or "family" not in self.function:
            raise ConfigError("function: must be a dict with a 'family' key")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def config_hash(self) -> str:
        """Hash of the numeric experiment; output location and worker count excluded."""
        payload = self.to_dict()
        payload.pop("out_dir")
        payload.pop("threads")
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]
