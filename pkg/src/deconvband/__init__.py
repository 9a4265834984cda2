"""Uniform confidence bands for deconvolution regression on equispaced designs."""

from .bands import (
    ConfidenceBand,
    GumbelConstants,
    band_halfwidth,
    band_setup,
    construct_band,
    estimate_sigma,
    gumbel_constants,
    kappa_for_level,
    spectral_moment_matrix,
)
from .bump import BumpFn
from .errors import DomainError, NumericalError
from .estimator import DesignSpec, EstimateField, Observations, estimate
from .kernel import KernelTable, compute_Kn, compute_limit_kernel
from .psf import PsfSpec, get_psf, product_laplace, radial_exponential

__version__ = "0.1.0"

__all__ = [
    "BumpFn",
    "ConfidenceBand",
    "DesignSpec",
    "DomainError",
    "EstimateField",
    "GumbelConstants",
    "KernelTable",
    "NumericalError",
    "Observations",
    "PsfSpec",
    "band_halfwidth",
    "band_setup",
    "compute_Kn",
    "compute_limit_kernel",
    "construct_band",
    "estimate",
    "estimate_sigma",
    "get_psf",
    "gumbel_constants",
    "kappa_for_level",
    "product_laplace",
    "radial_exponential",
    "spectral_moment_matrix",
]
