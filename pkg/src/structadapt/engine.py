"""Batched spectral evaluation of all single and pairwise smoothers.

The selection rule needs, for one observation, every F_hat_theta and every
pairwise difference norm ||F_hat_{theta,nu} - F_hat_nu||_p.  Done naively
that is N^2 spatial convolutions per observation.  Here each kernel's FFT is
cached once per grid; a scan then costs one forward FFT of the working field
plus N + N(N+1)/2 inverse FFTs (the pair transform is symmetric in the pair,
only the subtracted single differs).  Inverse transforms run in batches so
pocketfft can parallelize across the batch without changing any output.

Everything is deterministic: kernel order is the grid order, reductions are
index-ordered, and FFT results do not depend on the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .grid import GridSpec, inner_norm_tools
from .kernels import CollectionConstants, collection_constants

__all__ = ["PairScan", "LinearParts", "SelectionEngine"]

_BATCH = 32


def _embed_centered(patch: np.ndarray, shape: tuple) -> np.ndarray:
    """Place a centered odd patch into a zero array with its center at index 0."""
    out = np.zeros(shape)
    r = (patch.shape[0] - 1) // 2
    src = [np.arange(-r, r + 1) % s for s in shape]
    idx = np.ix_(*src)
    out[idx] = patch
    return out


def _rfft_weights(shape: tuple) -> np.ndarray:
    """Per-bin multiplicities for Parseval sums over an rfftn spectrum."""
    last = shape[-1]
    w = np.full(last // 2 + 1, 2.0)
    w[0] = 1.0
    if last % 2 == 0:
        w[-1] = 1.0
    return w


@dataclass
class PairScan:
    """Result of one observation scan over the kernel collection."""

    single_norms: np.ndarray  # (N,) ||F_hat_i||_p over the inner cube
    single_inf_norms: np.ndarray  # (N,) same with p = inf
    pair_diff_norms: np.ndarray  # (N, N): [i, j] = ||F_hat_{i,j} - F_hat_j||_p
    single_fields: np.ndarray | None = None  # (N, *grid shape) when requested


@dataclass
class LinearParts:
    """Scan of one input field, kept as fields rather than norms.

    Every estimator is linear in the working field, so the scans of the
    signal and of a unit noise field can be combined for any noise level:
    working = signal + scale * noise pointwise.  ``singles_inner`` has shape
    (N, inner...) and ``pair_diffs[i, j]`` holds F_hat_{i,j} - F_hat_j on
    the inner cube.
    """

    singles_inner: np.ndarray
    pair_diffs: np.ndarray


class SelectionEngine:
    """Cached FFT machinery for one (grid, kernel collection) pair."""

    def __init__(self, grid: GridSpec, kernels: list, workers: int = 1):
        if not kernels:
            raise ValueError("empty kernel collection")
        self.grid = grid
        self.kernels = list(kernels)
        self.workers = int(workers)
        n = grid.points_per_axis
        r_max = max(k.radius_nodes for k in self.kernels)
        self._n = n
        self.norm_tools = inner_norm_tools(grid)
        self._inner = self.norm_tools.crop
        self._dv = grid.cell_volume
        # Wrap-free requirements: single fields on the whole box need
        # n + r_max; pair fields are consumed on the inner cube only, which
        # sits inner_start nodes from the box edge, so 2 r_max - inner_start
        # suffices there; the pair-kernel Parseval table needs 4 r_max + 1.
        inner_start = self._inner.start
        pad_extra = max(r_max, 2 * r_max - inner_start) + 1
        pad = sfft.next_fast_len(max(n + pad_extra, 4 * r_max + 2))
        self.pad_shape = (pad,) * grid.dim

        specs = []
        for k in self.kernels:
            emb = _embed_centered(k.patch, self.pad_shape)
            specs.append(sfft.rfftn(emb, workers=self.workers))
        self.spectra = np.stack(specs)  # (N, *spec_shape)
        self._ntot = float(np.prod(self.pad_shape))
        self._pw = _rfft_weights(self.pad_shape)

        self.sigma_single = np.array([k.norm2 for k in self.kernels])
        self.constants: CollectionConstants = collection_constants(self.kernels)
        self.sigma_pair = self._pair_sigma_table()

    # -- tables ---------------------------------------------------------

    def _parseval_sq(self, spec_batch: np.ndarray) -> np.ndarray:
        """Discrete squared L2 norms (with cell volume) from spectra."""
        mag = spec_batch.real**2 + spec_batch.imag**2
        return np.sum(mag * self._pw, axis=tuple(range(1, mag.ndim))) * (
            self._dv / self._ntot
        )

    def _pair_sigma_table(self) -> np.ndarray:
        """sigma_tilde[i, j] = max(||K_{i,j} - K_j||_2, 1), all ordered pairs."""
        n_k = len(self.kernels)
        table = np.empty((n_k, n_k))
        for j in range(n_k):
            diff = self.spectra * (self.spectra[j] * self._dv) - self.spectra[j]
            table[:, j] = np.sqrt(self._parseval_sq(diff))
        return np.maximum(table, 1.0)

    # -- scans ------------------------------------------------------------

    def _forward(self, values_nd: np.ndarray) -> np.ndarray:
        emb = np.zeros(self.pad_shape)
        emb[tuple(slice(0, self._n) for _ in range(self.grid.dim))] = values_nd
        return sfft.rfftn(emb, workers=self.workers)

    def _irfft_box(self, spec_batch: np.ndarray) -> np.ndarray:
        """Inverse transform a batch of spectra, cropped to the grid box."""
        axes = tuple(range(1, 1 + self.grid.dim))
        spatial = sfft.irfftn(
            spec_batch, s=self.pad_shape, axes=axes, workers=self.workers
        )
        sl = (slice(None),) + (slice(0, self._n),) * self.grid.dim
        return spatial[sl]

    def _crop_inner(self, box_batch: np.ndarray) -> np.ndarray:
        sl = (slice(None),) + (self._inner,) * self.grid.dim
        return np.ascontiguousarray(box_batch[sl])

    def scan(self, working_nd: np.ndarray, p: float, want_fields: bool = False) -> PairScan:
        """Evaluate all single and pairwise smoothers of one working field."""
        n_k = len(self.kernels)
        y_spec = self._forward(working_nd)

        singles_full = (
            np.empty((n_k,) + (self._n,) * self.grid.dim) if want_fields else None
        )
        singles = np.empty((n_k,) + self.norm_tools.crop_shape)
        for lo in range(0, n_k, _BATCH):
            hi = min(lo + _BATCH, n_k)
            box = self._irfft_box(self.spectra[lo:hi] * (y_spec * self._dv))
            singles[lo:hi] = self._crop_inner(box)
            if want_fields:
                singles_full[lo:hi] = box
        single_norms = self.norm_tools.norms(singles, p, batch=True)
        single_inf = self.norm_tools.norms(singles, np.inf, batch=True)

        d = np.empty((n_k, n_k))
        pair_scale = self._dv * self._dv
        for i in range(n_k):
            base = self.spectra[i] * y_spec * pair_scale
            for lo in range(i, n_k, _BATCH):
                hi = min(lo + _BATCH, n_k)
                # F_hat_{i,j} for j in [lo, hi); symmetric in the pair, so it
                # serves both orientations with different subtracted singles.
                pair_fields = self._crop_inner(
                    self._irfft_box(self.spectra[lo:hi] * base)
                )
                d[i, lo:hi] = self.norm_tools.norms(
                    pair_fields - singles[lo:hi], p, batch=True
                )
                d[lo:hi, i] = self.norm_tools.norms(
                    pair_fields - singles[i], p, batch=True
                )
        return PairScan(
            single_norms=single_norms,
            single_inf_norms=single_inf,
            pair_diff_norms=d,
            single_fields=singles_full,
        )

    def smooth_all(self, values_nd: np.ndarray) -> np.ndarray:
        """Inner-cube values of K_i applied to one field, for every kernel."""
        n_k = len(self.kernels)
        y_spec = self._forward(values_nd)
        out = np.empty((n_k,) + self.norm_tools.crop_shape)
        for lo in range(0, n_k, _BATCH):
            hi = min(lo + _BATCH, n_k)
            out[lo:hi] = self._crop_inner(
                self._irfft_box(self.spectra[lo:hi] * (y_spec * self._dv))
            )
        return out

    def linear_parts(self, values_nd: np.ndarray) -> LinearParts:
        """All single fields and pair-difference fields of one input.

        Memory is N^2 times the inner cube; intended for the noise-ladder
        experiments where one noise draw serves several noise levels.
        """
        n_k = len(self.kernels)
        y_spec = self._forward(values_nd)
        inner_shape = self.norm_tools.crop_shape
        singles = np.empty((n_k,) + inner_shape)
        for lo in range(0, n_k, _BATCH):
            hi = min(lo + _BATCH, n_k)
            singles[lo:hi] = self._crop_inner(
                self._irfft_box(self.spectra[lo:hi] * (y_spec * self._dv))
            )
        diffs = np.empty((n_k, n_k) + inner_shape)
        pair_scale = self._dv * self._dv
        for i in range(n_k):
            base = self.spectra[i] * y_spec * pair_scale
            for lo in range(i, n_k, _BATCH):
                hi = min(lo + _BATCH, n_k)
                pair_fields = self._crop_inner(
                    self._irfft_box(self.spectra[lo:hi] * base)
                )
                diffs[i, lo:hi] = pair_fields - singles[lo:hi]
                diffs[lo:hi, i] = pair_fields - singles[i]
        return LinearParts(singles_inner=singles, pair_diffs=diffs)

    def combine_parts(
        self, signal: LinearParts, noise: LinearParts, eps: float, p: float
    ) -> tuple:
        """Norm tables at one noise level from decomposed scans.

        Returns (pair_diff_norms, singles_inner) where the singles are the
        combined estimate fields on the inner cube.
        """
        scale = eps / np.sqrt(self._dv)
        n_k = len(self.kernels)
        m = self.norm_tools.crop_shape
        pairs = (signal.pair_diffs + scale * noise.pair_diffs).reshape((n_k * n_k,) + m)
        pair_norms = self.norm_tools.norms(pairs, p, batch=True).reshape(n_k, n_k)
        singles = signal.singles_inner + scale * noise.singles_inner
        return pair_norms, singles

    def noise_suprema(self, noise_nd: np.ndarray, p: float) -> tuple:
        """(S1, S2, zeta) for one unit-level noise realization.

        S1 = max_theta of the normalized single stochastic term's p-norm,
        S2 = the same over ordered pairs with the truncated pair scale,
        zeta = max_theta of the normalized single sup-norm (used by the
        remainder term of the risk bound).
        """
        dv_half = self._dv**-0.5
        scan = self.scan(noise_nd * dv_half, p)
        s1 = float(np.max(scan.single_norms / self.sigma_single))
        s2 = float(np.max(scan.pair_diff_norms / self.sigma_pair))
        zeta = float(np.max(scan.single_inf_norms / self.sigma_single))
        return s1, s2, zeta
