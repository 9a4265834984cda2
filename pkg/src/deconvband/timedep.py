"""Time-dependent regression: deconvolution in space, plain smoothing in time.

Observations live on ``{-n..n}^d x {-m..m}`` with ``x_k = k / (n a_n)`` and
``t_j = j / (m b_m)``. The kernel is (d+1)-dimensional but only its spatial
part is inverse-filtered, since the blur does not act on time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bands import (
    ConfidenceBand,
    GumbelConstants,
    _positive,
    _positive_det,
    assemble_band,
    check_eval_step,
    kappa_for_level,
    moment_matrix,
    norming_constant,
)
from .bump import BumpFn
from .errors import DomainError
from .estimator import (
    DesignSpec,
    EstimateField,
    EstimatorPlan,
    GridGeometry,
    Observations,
    _axes,
    _resolve_kernel,
    direct_sum,
    fft_sum,
)
from .kernel import (
    KIND_TIMEDEP,
    KernelTable,
    SpectralKernel,
    _tabulate,
    default_level,
    spectral_mesh,
    spectral_nodes,
)
from .psf import PsfSpec

KIND_TIMEDEP_LIMIT = "K_timedep_limit"
KIND_TIME_FACTOR = "kappa_t"
DN3_EXPONENTS = ("d-1", "d")
NORMALIZATIONS = ("printed", "unit-variance")


@dataclass(frozen=True)
class TimedepDesign:
    """Space-time design; ``L1``, ``L2`` configure the bandwidth-compatibility check."""

    spatial: DesignSpec
    m: int
    b_m: float
    h_t: float
    L1: float = 10.0
    L2: float = 0.5

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not 0.0 < self.b_m < 1.0:
            raise ValueError(f"b_m must lie in (0, 1), got {self.b_m}")
        if not self.m * self.b_m > 1.0:
            raise ValueError(f"time design must expand: m * b_m = {self.m * self.b_m} <= 1")
        if not 0.0 < self.h_t < 1.0:
            raise ValueError(f"time bandwidth h_t must lie in (0, 1), got {self.h_t}")
        if not (self.L1 > 0 and 0.0 < self.L2 < 1.0):
            raise ValueError(f"need L1 > 0 and L2 in (0, 1), got {self.L1}, {self.L2}")
        if not self.compatible():
            raise ValueError(
                f"bandwidths violate h_t + h <= L1 h^(d(1-L2)) h_t^(1-L2) "
                f"(h={self.h}, h_t={self.h_t}, L1={self.L1}, L2={self.L2})"
            )

    def compatible(self) -> bool:
        d, h, ht = self.d, self.h, self.h_t
        return ht + h <= self.L1 * h ** (d * (1 - self.L2)) * ht ** (1 - self.L2)

    @property
    def d(self) -> int:
        return self.spatial.d

    @property
    def n(self) -> int:
        return self.spatial.n

    @property
    def a_n(self) -> float:
        return self.spatial.a_n

    @property
    def h(self) -> float:
        return self.spatial.h

    @property
    def time_step(self) -> float:
        return 1.0 / (self.m * self.b_m)

    @property
    def geometry(self) -> GridGeometry:
        s = self.spatial
        scale = (s.n * s.a_n * s.h) ** s.d * self.m * self.b_m * self.h_t
        return GridGeometry(
            half_counts=(s.n,) * s.d + (self.m,),
            steps=(s.step,) * s.d + (self.time_step,),
            bandwidths=(s.h,) * s.d + (self.h_t,),
            prefactor=1.0 / ((2 * math.pi) ** (s.d + 0.5) * scale),
        )

    def time_axis(self) -> np.ndarray:
        return np.arange(-self.m, self.m + 1) * self.time_step

    def to_json(self) -> dict:
        return {**self.spatial.to_json(), "m": self.m, "b_m": self.b_m, "h_t": self.h_t,
                "L1": self.L1, "L2": self.L2}


def _check(spec: PsfSpec, bump: BumpFn) -> None:
    if bump.dim != spec.dim + 1:
        raise ValueError(
            f"time-dependent kernel needs a {spec.dim + 1}-dimensional bump, got dim {bump.dim}"
        )


def _meta(spec: PsfSpec, bump: BumpFn) -> dict:
    return {"psf": spec.kind, "D": bump.D, "profile": bump.profile}


def timedep_kernel(spec: PsfSpec, bump: BumpFn, h: float, h_t: float | None = None,
                   level: int | None = None) -> SpectralKernel:
    """Ǩ_n with integrand ``F eta(xi, tau) / F psi(xi / h)`` over ``[-1, 1]^(d+1)``."""
    _check(spec, bump)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    d = spec.dim
    meta = _meta(spec, bump)
    if h_t is not None:
        meta["h_t"] = float(h_t)
    return SpectralKernel(
        lambda v: bump(v) / spec.fourier(v[..., :d] / h),
        d + 1, level, kind=KIND_TIMEDEP, h=float(h), meta=meta,
    )


def timedep_limit_kernel(spec: PsfSpec, bump: BumpFn, level: int | None = None) -> SpectralKernel:
    """Ǩ with integrand ``Psi(xi) F eta(xi, tau)``."""
    _check(spec, bump)
    d = spec.dim
    return SpectralKernel(
        lambda v: spec.symbol(v[..., :d]) * bump(v),
        d + 1, level, kind=KIND_TIMEDEP_LIMIT, meta=_meta(spec, bump),
    )


def time_factor(D: float = 0.5, level: int | None = None) -> SpectralKernel:
    """``kappa_t``: the 1-d inverse transform of the time bump."""
    b = BumpFn(D=D, dim=1)
    return SpectralKernel(b, 1, level, kind=KIND_TIME_FACTOR, meta={"D": D})


def compute_Kn_timedep(
    spec: PsfSpec,
    bump: BumpFn,
    h: float,
    h_t: float,
    extent=10.0,
    points=101,
    level: int | None = None,
    check: bool = True,
    tol: float = 1e-8,
) -> KernelTable:
    """Tabulate Ǩ_n on a symmetric (d+1)-dimensional grid.

    ``h_t`` does not enter the kernel itself (it rescales the time argument
    at estimation); it is recorded in the metadata.
    """
    if not 0.0 < h < 1.0:
        raise ValueError(f"bandwidth h must lie in (0, 1), got {h}")
    if not 0.0 < h_t < 1.0:
        raise ValueError(f"time bandwidth h_t must lie in (0, 1), got {h_t}")
    return _tabulate(lambda lv: timedep_kernel(spec, bump, h, h_t, lv), spec.dim + 1,
                     extent, points, level, check, tol)


def estimate_timedep(
    obs: Observations,
    kernel: SpectralKernel | KernelTable,
    eval_axes=None,
    method: str = "direct",
) -> EstimateField:
    """Estimate on a tensor grid in ``[0, 1]^(d+1)`` (time is the last axis)."""
    design = obs.design
    if not isinstance(design, TimedepDesign):
        raise ValueError("estimate_timedep needs observations on a TimedepDesign")
    sk = _resolve_kernel(kernel, design, kind=KIND_TIMEDEP)
    geom = design.geometry
    axes = _axes(eval_axes, geom.dim)
    if method == "direct":
        values = direct_sum(obs.y, sk, geom, axes)
    elif method == "fft":
        values = fft_sum(obs.y, sk, geom, axes)
    elif method == "spectral":
        values = EstimatorPlan(sk, geom, axes)(obs.y)
    else:
        raise ValueError(f"unknown method {method!r}")
    return EstimateField(axes=axes, values=values, design=design, kernel_id=sk.id, method=method)


def timedep_moment_matrix(spec: PsfSpec, bump: BumpFn,
                          level: int | None = None) -> tuple[np.ndarray, float]:
    """The (d+1) x (d+1) matrix whose determinant is D1, and D1 itself."""
    _check(spec, bump)
    d = spec.dim
    nodes, step = spectral_nodes(default_level(d + 1) if level is None else level)
    mesh = spectral_mesh(nodes, d + 1)
    spectrum = spec.symbol(mesh[..., :d]) * bump(mesh)
    mat = moment_matrix(spectrum, nodes, step, 2 * (d + 1))
    return mat, _positive_det(mat)


def gumbel_constants_timedep(D1: float, d: int, h: float, h_t: float,
                             dn3_exponent: str = "d-1") -> GumbelConstants:
    """Dn2 = sqrt(D1 / (2 pi)^(d+2)) / (h^d h_t); Dn3 with coefficient d-1 (or d)."""
    if dn3_exponent not in DN3_EXPONENTS:
        raise ValueError(f"dn3_exponent must be one of {DN3_EXPONENTS}, got {dn3_exponent!r}")
    dn2 = math.sqrt(D1 / (2 * math.pi) ** (d + 2)) / (h**d * h_t)
    if not dn2 > 1:
        raise DomainError(f"Dn2={dn2:.6g} <= 1: bandwidth too large for asymptotic constants")
    coef = d - 1 if dn3_exponent == "d-1" else d
    return GumbelConstants(C1=D1, Cn2=dn2, Cn3=norming_constant(dn2, coef), d=d, h=h, h_t=h_t)


def timedep_halfwidth(sigma: float, k_l2norm: float, design: TimedepDesign, beta: float,
                      kappa: float, gc: GumbelConstants, normalization: str = "printed") -> float:
    """Half-width ``(kappa/Dn3 + Dn3) sigma ||Ǩ|| / (h^beta sqrt(...) (2 pi)^(d+1))``.

    With ``normalization="unit-variance"`` the factor ``(2 pi)^(d+1)`` becomes
    ``(2 pi)^(d+1/2)``, the exact standard deviation scale of the estimator.
    """
    _positive(sigma=sigma, k_l2norm=k_l2norm)
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    d, h = design.d, design.h
    power = d + 1 if normalization == "printed" else d + 0.5
    root = math.sqrt((h * design.n * design.a_n) ** d * design.m * design.b_m * design.h_t)
    phi = (kappa / gc.Cn3 + gc.Cn3) * sigma * k_l2norm / (h**beta * root * (2 * math.pi) ** power)
    if not phi > 0:
        raise DomainError(f"kappa={kappa} gives a non-positive half-width")
    return phi


def construct_band_timedep(est: EstimateField, sigma: float, spec: PsfSpec, gc: GumbelConstants,
                           alpha: float, k_l2norm: float, normalization: str = "printed",
                           meta: dict | None = None) -> ConfidenceBand:
    design = est.design
    if not isinstance(design, TimedepDesign):
        raise ValueError("construct_band_timedep needs an estimate on a TimedepDesign")
    if (gc.d != design.d or gc.h_t is None
            or not math.isclose(gc.h, design.h, rel_tol=1e-12)
            or not math.isclose(gc.h_t, design.h_t, rel_tol=1e-12)):
        raise ValueError("constants do not match the design bandwidths or dimension")
    if spec.dim != design.d:
        raise ValueError(f"PSF dimension {spec.dim} != spatial dimension {design.d}")
    check_eval_step(est, design.geometry.bandwidths)
    kappa = kappa_for_level(alpha)
    phi = timedep_halfwidth(sigma, k_l2norm, design, spec.beta, kappa, gc, normalization)
    return assemble_band(est, phi, alpha, kappa, sigma, gc, k_l2norm,
                         {"eval_step": est.step, "normalization": normalization, **(meta or {})})


@dataclass(frozen=True)
class TimedepSetup:
    constants: GumbelConstants
    matrix: np.ndarray = field(repr=False, compare=False)
    k_l2norm: float


def timedep_setup(spec: PsfSpec, bump: BumpFn, design: TimedepDesign,
                  dn3_exponent: str = "d-1", level: int | None = None) -> TimedepSetup:
    mat, d1 = timedep_moment_matrix(spec, bump, level)
    gc = gumbel_constants_timedep(d1, design.d, design.h, design.h_t, dn3_exponent)
    return TimedepSetup(gc, mat, timedep_limit_kernel(spec, bump, level).l2_norm)
