"""Grid geometry, scalar fields, discrete L_p norms and discrete smoothing.

The observation window is the cube [-W, W]^d sampled on a regular lattice of
n points per axis; the estimation window is the fixed inner cube
[-1/2, 1/2]^d.  W must leave a margin of at least sqrt(d) so that both the
first-stage kernels (support radius <= sqrt(d)/2 after rotation) and the
second-stage convolved kernels (twice that) never read outside the lattice
when evaluated anywhere on the inner cube.

Integral L_p norms are midpoint-cell Riemann sums with boundary cells
clipped so the cells tile the region exactly; p = inf is a max over nodes
strictly inside the region.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .rng import normal_field

__all__ = [
    "GridSpec",
    "Field",
    "Observation",
    "INNER_HALF_WIDTH",
    "make_grid",
    "sample_function",
    "draw_noise",
    "lp_norm",
    "apply_kernel",
    "field_to_bytes",
    "field_from_bytes",
    "field_to_csv",
    "field_from_csv",
]

INNER_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice over [-half_width, half_width]^dim.

    Nodes per axis are exactly ``-half_width + k * spacing`` for
    ``k = 0 .. points_per_axis - 1``; points_per_axis is odd so the origin
    is a node.
    """

    dim: int
    points_per_axis: int
    half_width: float
    inner_half_width: float = INNER_HALF_WIDTH

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def center_index(self) -> int:
        return (self.points_per_axis - 1) // 2

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis (all axes are identical)."""
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (size, dim), row-major axis order."""
        ax = self.axis()
        grids = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=-1)

    def inner_slice(self) -> slice:
        """Per-axis index slice of nodes strictly inside the inner cube."""
        ax = self.axis()
        inside = np.nonzero(np.abs(ax) < self.inner_half_width)[0]
        if inside.size == 0:
            raise ValueError("no grid nodes inside the estimation window")
        return slice(int(inside[0]), int(inside[-1]) + 1)

    def inner_shape(self) -> tuple:
        s = self.inner_slice()
        return (s.stop - s.start,) * self.dim

    def inner_cell_slice(self) -> slice:
        """Per-axis slice of nodes whose midpoint cells overlap the inner cube."""
        ax = self.axis()
        half = 0.5 * self.spacing
        touch = np.nonzero(np.abs(ax) < self.inner_half_width + half - 1e-12)[0]
        return slice(int(touch[0]), int(touch[-1]) + 1)

    def inner_cell_weights(self) -> np.ndarray:
        """Clipped overlap of each midpoint cell with the inner interval, per axis.

        Integral norms use these so that the cell decomposition covers
        exactly [-1/2, 1/2]; boundary cells get fractional weight.
        """
        ax = self.axis()[self.inner_cell_slice()]
        half = 0.5 * self.spacing
        w = self.inner_half_width
        overlap = np.minimum(ax + half, w) - np.maximum(ax - half, -w)
        return np.clip(overlap / self.spacing, 0.0, 1.0)


@dataclass(frozen=True)
class Field:
    """Scalar field on a grid; values stored flat in row-major axis order."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size != self.grid.size:
            raise ValueError(
                f"field length {v.size} does not match grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    def nd(self) -> np.ndarray:
        """Values reshaped to the d-dimensional lattice."""
        return self.values.reshape(self.grid.shape)

    def inner_nd(self) -> np.ndarray:
        s = self.grid.inner_slice()
        return self.nd()[(s,) * self.grid.dim]


@dataclass(frozen=True)
class Observation:
    """One realization of the discretized white-noise experiment.

    ``signal`` holds samples of the target function F on the grid, ``noise``
    an iid standard-normal field reproducible from ``seed`` alone.  A linear
    functional with kernel weight K sees
    ``sum_j K(t_j - x) * (F(t_j) dV + eps * dV^{1/2} * xi_j)``, so the
    working field handed to smoothers is ``F + eps * dV^{-1/2} * xi``.
    """

    signal: Field
    noise: Field
    eps: float
    seed: int

    def __post_init__(self):
        if self.signal.grid != self.noise.grid:
            raise ValueError("signal and noise live on different grids")
        if not 0.0 <= self.eps < 1.0:
            raise ValueError(f"noise level must be in [0, 1), got {self.eps}")

    @property
    def grid(self) -> GridSpec:
        return self.signal.grid

    def working_field(self) -> Field:
        """F + eps * dV^{-1/2} * xi; every linear estimator smooths this."""
        if self.eps == 0.0:
            return self.signal
        scale = self.eps / np.sqrt(self.grid.cell_volume)
        return Field(self.grid, self.signal.values + scale * self.noise.values)


def make_grid(dim: int, points_per_axis: int, half_width: float) -> GridSpec:
    """Build a GridSpec, enforcing the kernel-support margin.

    half_width must be at least 1/2 + sqrt(dim): the inner cube plus two
    rotated kernel-support radii.  points_per_axis must be odd (origin node)
    and at least 9.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if points_per_axis < 9:
        raise ValueError(f"points_per_axis must be >= 9, got {points_per_axis}")
    if points_per_axis % 2 == 0:
        raise ValueError(
            f"points_per_axis must be odd so the origin is a node, got {points_per_axis}"
        )
    margin = 0.5 + np.sqrt(dim)
    if half_width < margin - 1e-12:
        raise ValueError(
            f"half_width {half_width} below margin bound {margin:.6f} "
            f"(= 1/2 + sqrt(d)); kernel supports would overflow the grid"
        )
    return GridSpec(dim=dim, points_per_axis=points_per_axis, half_width=float(half_width))


def sample_function(f, grid: GridSpec) -> Field:
    """Sample a scalar function pointwise on every grid node.

    ``f`` may accept an (m, dim) array and return m values, or accept a
    single point.  Non-finite values are rejected with the offending node
    named.
    """
    nodes = grid.nodes()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", DeprecationWarning)
            vals = np.asarray(f(nodes), dtype=np.float64).reshape(-1)
        if vals.size != grid.size:
            raise TypeError
    except (TypeError, ValueError, DeprecationWarning):
        vals = np.array([float(f(p)) for p in nodes], dtype=np.float64)
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        j = int(bad[0])
        raise ValueError(f"function not finite at node {j} = {nodes[j]}")
    return Field(grid, vals)


def draw_noise(grid: GridSpec, seed: int) -> Field:
    """Iid standard-normal field; node j's value is a pure function of (seed, j)."""
    return Field(grid, normal_field(seed, grid.size))


def weighted_power_sum(
    values_nd: np.ndarray, weights_1d: np.ndarray, p: float, spatial_rank: int | None = None
) -> np.ndarray:
    """sum over cells of (product of per-axis weights) * |v|^p.

    The last ``spatial_rank`` axes of ``values_nd`` are spatial (each of the
    weight length); leading axes are batch dimensions.
    """
    if spatial_rank is None:
        spatial_rank = values_nd.ndim
    if p == 1.0:
        out = np.abs(values_nd)
    elif p == 2.0:
        out = values_nd * values_nd
    else:
        out = np.abs(values_nd) ** p
    nd = out.ndim
    for axis in range(nd - spatial_rank, nd):
        shape = [1] * nd
        shape[axis] = weights_1d.size
        out = out * weights_1d.reshape(shape)
    return out.sum(axis=tuple(range(nd - spatial_rank, nd)))


@dataclass(frozen=True)
class InnerNormTools:
    """Shared machinery for inner-region norms of cropped field batches.

    ``crop`` is the per-axis slice of nodes whose cells touch the inner cube;
    integral norms weight boundary cells by their clipped overlap, sup norms
    restrict to the strictly-inside sub-block.
    """

    crop: slice
    weights: np.ndarray
    strict_lo: int
    strict_hi: int  # exclusive offset from the crop start
    cell_volume: float
    dim: int

    @property
    def crop_shape(self) -> tuple:
        return (self.crop.stop - self.crop.start,) * self.dim

    def crop_field(self, values_nd: np.ndarray, batch: bool = False) -> np.ndarray:
        lead = (slice(None),) if batch else ()
        return values_nd[lead + (self.crop,) * self.dim]

    def norms(self, cropped: np.ndarray, p: float, batch: bool = False) -> np.ndarray:
        """L_p norms of (a batch of) inner-cropped arrays."""
        lead = (slice(None),) if batch else ()
        if p == np.inf:
            sub = cropped[lead + (slice(self.strict_lo, self.strict_hi),) * self.dim]
            if batch:
                return np.max(np.abs(sub.reshape(sub.shape[0], -1)), axis=1)
            return float(np.max(np.abs(sub)))
        total = weighted_power_sum(cropped, self.weights, p, spatial_rank=self.dim)
        out = (total * self.cell_volume) ** (1.0 / p)
        return out if batch else float(out)


def inner_norm_tools(grid: GridSpec) -> InnerNormTools:
    crop = grid.inner_cell_slice()
    strict = grid.inner_slice()
    return InnerNormTools(
        crop=crop,
        weights=grid.inner_cell_weights(),
        strict_lo=strict.start - crop.start,
        strict_hi=strict.stop - crop.start,
        cell_volume=grid.cell_volume,
        dim=grid.dim,
    )


def lp_norm(f: Field, p: float, region: str = "inner") -> float:
    """Discrete L_p norm on a region.

    p < inf: midpoint-cell Riemann sum with boundary cells clipped to the
    region, so the cells tile exactly [-1/2, 1/2]^d (or the full window).
    p = inf: max over nodes strictly inside the region.
    """
    if not (p == np.inf or p >= 1.0):
        raise ValueError(f"p must be inf or >= 1, got {p}")
    if region == "inner":
        tools = inner_norm_tools(f.grid)
        return tools.norms(tools.crop_field(f.nd()), p)
    if region != "full":
        raise ValueError(f"unknown region {region!r}; expected 'inner' or 'full'")
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1.0 / p))


def _kernel_patch(kernel: Field) -> tuple:
    """Trim a centered kernel field to the bounding box of its support.

    Returns (patch ndarray, radius in nodes).  The patch is symmetric about
    the origin node: shape (2r+1)^d.
    """
    grid = kernel.grid
    nd = kernel.nd()
    nz = np.nonzero(nd)
    c = grid.center_index
    if len(nz[0]) == 0:
        return nd[(slice(c, c + 1),) * grid.dim], 0
    r = 0
    for axis_idx in nz:
        r = max(r, int(np.max(np.abs(axis_idx - c))))
    sl = (slice(c - r, c + r + 1),) * grid.dim
    return nd[sl], r


def _correlate(values_nd: np.ndarray, patch: np.ndarray, method: str = "fft") -> np.ndarray:
    """sum_j K(t_j - x) v(t_j) evaluated at every lattice node x.

    Correlation = convolution with the reversed patch; 'same' mode with an
    odd patch keeps node alignment exact.  Zero padding means entries closer
    than the patch radius to the array edge are truncated sums; callers must
    restrict to the validated region.
    """
    if method == "direct":
        pad = [(s // 2, s // 2) for s in patch.shape]
        padded = np.pad(values_nd, pad)
        out = np.zeros_like(values_nd)
        for idx in np.ndindex(*patch.shape):
            w = patch[idx]
            if w == 0.0:
                continue
            sl = tuple(slice(i, i + n) for i, n in zip(idx, values_nd.shape))
            out += w * padded[sl]
        return out
    flipped = patch[(slice(None, None, -1),) * patch.ndim]
    return fftconvolve(values_nd, flipped, mode="same")


def check_support_fits(grid: GridSpec, radius_nodes: int, region: str) -> None:
    """Raise if a kernel of the given node radius overflows the grid for the region."""
    if region == "inner":
        s = grid.inner_slice()
        lo, hi = s.start, s.stop - 1
    elif region in ("full", "extended"):
        lo, hi = 0, grid.points_per_axis - 1
    else:
        raise ValueError(f"unknown output region {region!r}")
    if region == "extended":
        # inner cube dilated by the kernel support itself
        s = grid.inner_slice()
        lo, hi = s.start - radius_nodes, s.stop - 1 + radius_nodes
    if lo - radius_nodes < 0 or hi + radius_nodes > grid.points_per_axis - 1:
        raise ValueError(
            f"kernel support radius {radius_nodes} nodes overflows the grid "
            f"for output region {region!r} (n={grid.points_per_axis})"
        )


def apply_kernel(
    kernel: Field,
    input_field: Field,
    output_region: str = "inner",
    method: str = "fft",
) -> Field:
    """Discrete smoothing: output[x] = sum_j K(t_j - x) v(t_j) dV.

    ``kernel`` holds values of K(u) centered at the origin node.  The kernel
    support must fit inside the grid margin for every output node in
    ``output_region`` ('inner' or 'extended'); overflow raises rather than
    silently truncating.  Values outside the requested region are computed
    but carry boundary truncation and must not be used.
    """
    if kernel.grid != input_field.grid:
        raise ValueError("kernel and input live on different grids")
    grid = kernel.grid
    patch, r = _kernel_patch(kernel)
    check_support_fits(grid, r, output_region)
    out = _correlate(input_field.nd(), patch, method=method) * grid.cell_volume
    return Field(grid, out.reshape(-1))


# -- serialization ----------------------------------------------------------

_HEADER = struct.Struct("<qqd")  # dim, points_per_axis, half_width


def field_to_bytes(f: Field) -> bytes:
    """Flat binary layout: little-endian (int64 dim, int64 n, float64 W) header
    followed by float64 values in row-major axis order."""
    head = _HEADER.pack(f.grid.dim, f.grid.points_per_axis, f.grid.half_width)
    return head + f.values.astype("<f8").tobytes()


def field_from_bytes(buf: bytes) -> Field:
    dim, n, w = _HEADER.unpack_from(buf, 0)
    vals = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    grid = GridSpec(dim=int(dim), points_per_axis=int(n), half_width=float(w))
    return Field(grid, vals.copy())


def field_to_csv(f: Field, fh) -> None:
    """CSV dump for small grids: one row per node, coordinates then value."""
    nodes = f.grid.nodes()
    cols = [f"x{i + 1}" for i in range(f.grid.dim)]
    fh.write(",".join(cols + ["value"]) + "\n")
    for point, v in zip(nodes, f.values):
        coords = ",".join(format(c, ".12g") for c in point)
        fh.write(f"{coords},{format(v, '.12g')}\n")


def field_from_csv(fh, grid: GridSpec) -> Field:
    rows = fh.read().strip().splitlines()[1:]
    vals = np.array([float(r.rsplit(",", 1)[1]) for r in rows])
    return Field(grid, vals)
