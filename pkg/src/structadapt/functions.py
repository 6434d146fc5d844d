"""Structured test functions with certified smoothness metadata.

Every built-in target decomposes as F(t) = sum_i f_i(E_i^T t) over a
partition of the columns of an orthogonal direction matrix.  Components are
scaled trigonometric or polynomial maps whose derivative bounds are known in
closed form, so the declared Hoelder parameters (beta_i, L) are honest
rather than asserted.  The effective smoothness beta = beta_i / |block| is
equal across blocks by construction and validated at build time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Component", "StructuredFunction", "make_test_function", "trig_holder_constant"]


def trig_holder_constant(amplitude: float, freq: float, beta: float) -> float:
    """Certified Hoelder constant of A*cos(2 pi w u + phase) at smoothness beta.

    Derivatives of order k are bounded by A (2 pi w)^k; the order-floor(beta)
    derivative has Hoelder(alpha) seminorm at most A (2 pi w)^beta 2^(1-alpha)
    (from |cos^(l)(a) - cos^(l)(b)| <= min(2, |a - b|)).
    """
    omega = 2.0 * np.pi * freq
    ell = int(np.ceil(beta)) - 1 if beta == int(beta) else int(np.floor(beta))
    alpha = beta - ell
    deriv_sup = max(omega**k for k in range(ell + 1)) if ell >= 0 else 1.0
    holder_part = omega**beta * 2.0 ** (1.0 - alpha)
    if alpha == 1.0:
        holder_part = omega**beta
    return float(amplitude * max(deriv_sup, holder_part))


@dataclass(frozen=True)
class Component:
    """One additive block component f_i with certified smoothness.

    ``kind`` is 'cos', 'sin', 'tri', 'poly' or 'zero'.  Oscillating
    components on a block of size k vary along the fixed unit direction
    (1,..,1)/sqrt(k) within the block.  ``beta_i`` and ``holder_const``
    certify membership of the component in the isotropic smoothness ball of
    that order.
    """

    kind: str
    block_size: int
    beta_i: float
    holder_const: float
    amplitude: float = 1.0
    freq: float = 1.0
    phase: float = 0.0
    coeffs: tuple = ()  # poly: ((multi_index, coeff), ...)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Evaluate on block coordinates, shape (m, block_size)."""
        u = np.atleast_2d(u)
        if self.kind == "zero":
            return np.zeros(u.shape[0])
        if self.kind in ("cos", "sin"):
            a = np.full(self.block_size, 1.0 / np.sqrt(self.block_size))
            arg = 2.0 * np.pi * self.freq * (u @ a) + self.phase
            f = np.cos if self.kind == "cos" else np.sin
            return self.amplitude * f(arg)
        if self.kind == "tri":
            # Triangle wave: period 1 in v = freq * (a . u), values in [-1, 1],
            # kinks at half-periods.  Exactly Lipschitz, never smoother.
            a = np.full(self.block_size, 1.0 / np.sqrt(self.block_size))
            v = self.freq * (u @ a) + self.phase
            return self.amplitude * (4.0 * np.abs(v - np.round(v)) - 1.0)
        if self.kind == "poly":
            out = np.zeros(u.shape[0])
            for alpha, c in self.coeffs:
                term = np.full(u.shape[0], float(c))
                for j, a_j in enumerate(alpha):
                    if a_j:
                        term = term * u[:, j] ** a_j
                out += term
            return out
        raise ValueError(f"unknown component kind {self.kind!r}")

    @property
    def sup_bound(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind in ("cos", "sin", "tri"):
            return abs(self.amplitude)
        # poly: crude bound on the rotated observation box
        return float(
            sum(abs(c) * 4.0 ** sum(alpha) for alpha, c in self.coeffs)
        )


@dataclass(frozen=True)
class StructuredFunction:
    """A target function with declared structure and smoothness."""

    kind: str
    dim: int
    true_partition: tuple
    true_directions: np.ndarray = field(repr=False)
    components: tuple
    beta: float  # effective smoothness beta_i / |block_i|, equal across blocks
    poly_degree: int | None = None  # total degree when the target is polynomial

    def __post_init__(self):
        flat = sorted(j for b in self.true_partition for j in b)
        if flat != list(range(self.dim)):
            raise ValueError("partition does not cover all axes")
        if len(self.components) != len(self.true_partition):
            raise ValueError("one component per partition block required")
        for block, comp in zip(self.true_partition, self.components):
            if comp.block_size != len(block):
                raise ValueError("component dimension does not match its block")
            if abs(comp.beta_i / len(block) - self.beta) > 1e-12:
                raise ValueError(
                    f"component smoothness {comp.beta_i} on a block of size "
                    f"{len(block)} breaks the equal effective-smoothness rule "
                    f"(expected beta_i = {self.beta * len(block)})"
                )

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=np.float64))
        u = t @ self.true_directions
        out = np.zeros(t.shape[0])
        for block, comp in zip(self.true_partition, self.components):
            out += comp(u[:, list(block)])
        return out

    @property
    def sup_norm_bound(self) -> float:
        return float(sum(c.sup_bound for c in self.components))

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "partition": [list(b) for b in self.true_partition],
            "beta": self.beta,
            "components": [
                {
                    "kind": c.kind,
                    "beta_i": c.beta_i,
                    "holder_const": c.holder_const,
                    "amplitude": c.amplitude,
                    "freq": c.freq,
                }
                for c in self.components
            ],
        }


def _rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _trig(kind, block_size, beta, amplitude, freq, phase=0.0) -> Component:
    beta_i = beta * block_size
    if kind == "tri":
        if beta_i != 1.0 or block_size != 1:
            raise ValueError(
                "triangle components certify exactly Lipschitz smoothness: "
                "block size 1 with effective smoothness 1"
            )
        holder = 4.0 * amplitude * freq
    else:
        holder = trig_holder_constant(amplitude, freq, beta_i)
    return Component(
        kind=kind,
        block_size=block_size,
        beta_i=beta_i,
        holder_const=holder,
        amplitude=amplitude,
        freq=freq,
        phase=phase,
    )


def _zero(block_size: int, beta: float) -> Component:
    return Component(
        kind="zero", block_size=block_size, beta_i=beta * block_size, holder_const=0.0
    )


def make_test_function(spec: dict) -> StructuredFunction:
    """Build a registered test function from a parameter dict.

    Families: zero, polynomial, single-index, additive, projection-pursuit,
    multi-index, additive-multi-index.  Unknown families and block/smoothness
    declarations that break the equal-effective-smoothness rule are rejected.
    """
    spec = dict(spec)
    family = spec.pop("family", None)
    dim = int(spec.pop("dim", 2))
    beta = float(spec.pop("beta", 1.0))
    amplitude = float(spec.pop("amplitude", 1.0))
    freq = float(spec.pop("freq", 1.0))
    angle = float(spec.pop("angle", 0.0))
    degree = int(spec.pop("degree", 2))
    profile = str(spec.pop("profile", "cos"))
    if spec:
        raise ValueError(f"unknown parameters for family {family!r}: {sorted(spec)}")

    if family == "zero":
        return StructuredFunction(
            kind="zero",
            dim=dim,
            true_partition=(tuple(range(dim)),),
            true_directions=np.eye(dim),
            components=(_zero(dim, beta),),
            beta=beta,
        )

    if family == "polynomial":
        if dim == 1:
            coeffs = (((0,), 0.5), ((1,), 0.8), ((2,), -0.4))
        elif dim == 2:
            coeffs = (
                ((0, 0), 0.5),
                ((1, 0), 0.8),
                ((0, 1), -0.4),
                ((1, 1), 0.3),
                ((2, 0), -0.2),
            )
        else:
            coeffs = (((0,) * dim, 0.5), ((1,) + (0,) * (dim - 1), 0.8))
        coeffs = tuple((a, c) for a, c in coeffs if sum(a) <= degree)
        comp = Component(
            kind="poly",
            block_size=dim,
            beta_i=beta * dim,
            holder_const=float("nan"),  # certified via exact annihilation instead
            coeffs=coeffs,
        )
        return StructuredFunction(
            kind="polynomial",
            dim=dim,
            true_partition=(tuple(range(dim)),),
            true_directions=np.eye(dim),
            components=(comp,),
            beta=beta,
            poly_degree=max(sum(a) for a, _ in coeffs),
        )

    if family == "single-index":
        if dim == 1:
            e = np.eye(1)
            return StructuredFunction(
                kind="single-index",
                dim=1,
                true_partition=((0,),),
                true_directions=e,
                components=(_trig(profile, 1, beta, amplitude, freq),),
                beta=beta,
            )
        if dim != 2:
            raise ValueError("single-index targets are provided for dim 1 and 2")
        e = _rotation_2d(angle)
        return StructuredFunction(
            kind="single-index",
            dim=2,
            true_partition=((0,), (1,)),
            true_directions=e,
            components=(_trig(profile, 1, beta, amplitude, freq), _zero(1, beta)),
            beta=beta,
        )

    if family == "additive":
        if dim != 2:
            raise ValueError("additive target is provided for dim 2")
        return StructuredFunction(
            kind="additive",
            dim=2,
            true_partition=((0,), (1,)),
            true_directions=np.eye(2),
            components=(
                _trig("cos", 1, beta, amplitude, freq),
                _trig("sin", 1, beta, amplitude, freq),
            ),
            beta=beta,
        )

    if family == "projection-pursuit":
        if dim != 2:
            raise ValueError("projection-pursuit target is provided for dim 2")
        e = _rotation_2d(angle)
        return StructuredFunction(
            kind="projection-pursuit",
            dim=2,
            true_partition=((0,), (1,)),
            true_directions=e,
            components=(
                _trig("cos", 1, beta, amplitude, freq),
                _trig("sin", 1, beta, amplitude, 0.7 * freq),
            ),
            beta=beta,
        )

    if family == "multi-index":
        if dim < 2:
            raise ValueError("multi-index target needs dim >= 2")
        e = np.eye(dim) if dim != 2 else _rotation_2d(angle)
        if dim > 2:
            blocks = ((0, 1), tuple(range(2, dim)))
            comps = [_trig("cos", 2, beta, amplitude, freq), _zero(dim - 2, beta)]
        else:
            blocks = ((0, 1),)
            comps = [_trig("cos", 2, beta, amplitude, freq)]
        return StructuredFunction(
            kind="multi-index",
            dim=dim,
            true_partition=blocks,
            true_directions=e,
            components=tuple(comps),
            beta=beta,
        )

    if family == "additive-multi-index":
        if dim != 3:
            raise ValueError("additive-multi-index target is provided for dim 3")
        return StructuredFunction(
            kind="additive-multi-index",
            dim=3,
            true_partition=((0, 1), (2,)),
            true_directions=np.eye(3),
            components=(
                _trig("cos", 2, beta, amplitude, freq),
                _trig("sin", 1, beta, amplitude, freq),
            ),
            beta=beta,
        )

    raise ValueError(f"unknown test-function family {family!r}")
