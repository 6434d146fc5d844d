"""Structural adaptation for kernel smoothing in the white noise model.

A simulation and estimation toolkit: linear kernel smoothers over a grid of
structural hypotheses (partition, orientation, bandwidth), a data-driven
selection rule with calibrated noise thresholds, and a Monte Carlo bench
that checks the selection rule's oracle behavior and adaptive rates.
"""

__version__ = "0.1.0"

from .grid import (
    Field,
    GridSpec,
    Observation,
    apply_kernel,
    draw_noise,
    lp_norm,
    make_grid,
    sample_function,
)
from .kernels import (
    CollectionConstants,
    KernelField,
    ThetaPoint,
    UnivariateKernel,
    build_structural_kernel,
    build_univariate_kernel,
    collection_constants,
    convolve_kernels,
    kernel_norms,
    moment,
)

__all__ = [
    "Field",
    "GridSpec",
    "Observation",
    "apply_kernel",
    "draw_noise",
    "lp_norm",
    "make_grid",
    "sample_function",
    "CollectionConstants",
    "KernelField",
    "ThetaPoint",
    "UnivariateKernel",
    "build_structural_kernel",
    "build_univariate_kernel",
    "collection_constants",
    "convolve_kernels",
    "kernel_norms",
    "moment",
    "__version__",
]
