"""Gumbel-limit constants and uniform confidence bands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bump import BumpFn
from .errors import DomainError, NumericalError
from .estimator import DesignSpec, EstimateField, Observations
from .kernel import default_level, kn_kernel, limit_kernel, spectral_mesh, spectral_nodes
from .psf import PsfSpec


@dataclass(frozen=True)
class GumbelConstants:
    """Norming constants for the supremum of the standardized error field.

    For the time-dependent model ``C1`` holds the determinant of the
    (d+1)-dimensional moment matrix, ``d`` stays the spatial dimension and
    ``h_t`` is set.
    """

    C1: float
    Cn2: float
    Cn3: float
    d: int
    h: float
    h_t: float | None = None

    def __post_init__(self) -> None:
        if not self.C1 > 0:
            raise ValueError(f"C1 must be positive, got {self.C1}")
        if not self.Cn2 > 1:
            raise DomainError(f"Cn2={self.Cn2} <= 1: bandwidth too large for asymptotic constants")
        if not self.Cn3 > 0:
            raise DomainError(f"Cn3={self.Cn3} <= 0: bandwidth too large for asymptotic constants")

    def to_json(self) -> dict:
        out = {"C1": self.C1, "Cn2": self.Cn2, "Cn3": self.Cn3, "d": self.d, "h": self.h}
        if self.h_t is not None:
            out["h_t"] = self.h_t
        return out


@dataclass
class ConfidenceBand:
    estimate: EstimateField
    halfwidth: float
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    kappa: float
    sigma_used: float
    constants: GumbelConstants
    k_l2norm: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.halfwidth > 0:
            raise ValueError(f"band half-width must be positive, got {self.halfwidth}")
        check_band_invariants(self.estimate.values, self.lower, self.upper, self.halfwidth)

    def contains(self, values) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(np.all((self.lower <= values) & (values <= self.upper)))

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "kappa": self.kappa,
            "sigma": self.sigma_used,
            "constants": self.constants.to_json(),
            "k_l2norm": self.k_l2norm,
            "halfwidth": self.halfwidth,
            "grid": {
                "axes": [a.tolist() for a in self.estimate.axes],
                "step": self.estimate.step,
            },
            "design": self.estimate.design.to_json(),
            "kernel": self.estimate.kernel_id,
            "meta": self.meta,
            "estimate": self.estimate.values.reshape(-1).tolist(),
            "lower": self.lower.reshape(-1).tolist(),
            "upper": self.upper.reshape(-1).tolist(),
        }


def check_band_invariants(estimate, lower, upper, halfwidth, rtol: float = 1e-12) -> None:
    """``upper - lower == 2 * halfwidth`` and ``lower <= estimate <= upper`` everywhere."""
    estimate, lower, upper = (np.asarray(a, dtype=float) for a in (estimate, lower, upper))
    slack = rtol * (np.max(np.abs(estimate)) + halfwidth)
    if np.max(np.abs(upper - lower - 2 * halfwidth)) > slack:
        raise ValueError("band width differs from twice the half-width")
    if np.any(lower > estimate + slack) or np.any(estimate > upper + slack):
        raise ValueError("estimate lies outside its own band")


def moment_matrix(spectrum: np.ndarray, nodes: np.ndarray, step: float,
                  two_pi_power: float) -> np.ndarray:
    """``(2 pi)^p / ||F||^2 * int |F(v)|^2 v_i v_j dv`` on a tensor midpoint grid."""
    dim = spectrum.ndim
    sq = spectrum**2
    norm2 = float(np.sum(sq))
    if not norm2 > 0:
        raise NumericalError("spectral function vanishes on the quadrature grid")
    mesh = spectral_mesh(nodes, dim).reshape(-1, dim)
    mat = (mesh.T * sq.reshape(-1)) @ mesh / norm2
    return (2 * math.pi) ** two_pi_power * mat


def spectral_moment_matrix(spec: PsfSpec, bump: BumpFn,
                           level: int | None = None) -> tuple[np.ndarray, float]:
    """The d x d matrix whose determinant is C1, and C1 itself."""
    if spec.dim != bump.dim:
        raise ValueError(f"PSF dimension {spec.dim} != bump dimension {bump.dim}")
    d = spec.dim
    nodes, step = spectral_nodes(default_level(d) if level is None else level)
    mesh = spectral_mesh(nodes, d)
    mat = moment_matrix(spec.symbol(mesh) * bump(mesh), nodes, step, 2 * d)
    return mat, _positive_det(mat)


def _positive_det(mat: np.ndarray) -> float:
    det = float(np.linalg.det(mat))
    if not det > 0:
        raise NumericalError(f"moment matrix determinant {det} is not positive", matrix=mat)
    return det


def norming_constant(c2: float, coef: float) -> float:
    """``sqrt(2 ln c2) + coef * ln(2 ln c2) / (2 sqrt(2 ln c2))``."""
    two_log = 2.0 * math.log(c2)
    root = math.sqrt(two_log)
    return root + coef * math.log(two_log) / (2.0 * root)


def gumbel_constants(C1: float, d: int, h: float) -> GumbelConstants:
    """Cn2 = sqrt(C1 / (2 pi)^(d+1)) / h^d and the matching Cn3."""
    cn2 = math.sqrt(C1 / (2 * math.pi) ** (d + 1)) / h**d
    if not cn2 > 1:
        raise DomainError(f"Cn2={cn2:.6g} <= 1: bandwidth too large for asymptotic constants")
    return GumbelConstants(C1=C1, Cn2=cn2, Cn3=norming_constant(cn2, d - 1), d=d, h=h)


def gumbel_cdf(kappa):
    """Limit law ``exp(-2 exp(-kappa))`` (Gumbel with location ln 2, scale 1)."""
    return np.exp(-2.0 * np.exp(-np.asarray(kappa, dtype=float)))


def kappa_for_level(alpha: float) -> float:
    """Quantile kappa with ``exp(-2 exp(-kappa)) = 1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return -math.log(-0.5 * math.log1p(-alpha))


def _positive(**kw) -> None:
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def band_halfwidth(sigma: float, k_l2norm: float, design, beta: float, kappa: float,
                   gc: GumbelConstants) -> float:
    """Half-width ``(kappa/Cn3 + Cn3) sigma ||K|| / ((2 pi)^d h^beta sqrt((h n a_n)^d))``.

    ``design`` only needs ``d``, ``n``, ``a_n`` and ``h`` attributes.
    """
    _positive(sigma=sigma, k_l2norm=k_l2norm)
    d, h = design.d, design.h
    scale = (2 * math.pi) ** d * h**beta * math.sqrt((h * design.n * design.a_n) ** d)
    phi = (kappa / gc.Cn3 + gc.Cn3) * sigma * k_l2norm / scale
    if not phi > 0:
        raise DomainError(f"kappa={kappa} gives a non-positive half-width")
    return phi


def estimate_sigma(obs: Observations, order: int = 2) -> float:
    """Difference-based noise level along the first design axis.

    order 1 averages ``(Y_{k+1} - Y_k)^2 / 2``; order 2 averages
    ``(Y_{k+1} - 2 Y_k + Y_{k-1})^2 / 6``, which removes a locally linear trend.
    """
    y = obs.y
    if order == 1:
        if y.shape[0] < 2:
            raise ValueError("order-1 difference estimator needs at least 2 points per axis")
        diffs = np.diff(y, axis=0)
        var = np.mean(diffs**2) / 2.0
    elif order == 2:
        if y.shape[0] < 3:
            raise ValueError("order-2 difference estimator needs at least 3 points per axis")
        diffs = y[2:] - 2.0 * y[1:-1] + y[:-2]
        var = np.mean(diffs**2) / 6.0
    else:
        raise ValueError(f"difference order must be 1 or 2, got {order}")
    return math.sqrt(float(var))


def check_eval_step(est: EstimateField, bandwidths, ratio: float = 0.1) -> None:
    """The band's sup is only trusted when each axis is sampled at ``<= ratio * bandwidth``."""
    for axis, (a, bw) in enumerate(zip(est.axes, bandwidths)):
        step = float(np.max(np.diff(a))) if a.size > 1 else 0.0
        if step > ratio * bw * (1 + 1e-12):
            raise ValueError(
                f"evaluation step {step:.4g} on axis {axis} exceeds {ratio:g} x bandwidth "
                f"{bw:.4g}; use a finer evaluation grid"
            )


def assemble_band(est: EstimateField, halfwidth: float, alpha: float, kappa: float,
                  sigma: float, gc: GumbelConstants, k_l2norm: float,
                  meta: dict | None = None) -> ConfidenceBand:
    return ConfidenceBand(
        estimate=est,
        halfwidth=halfwidth,
        lower=est.values - halfwidth,
        upper=est.values + halfwidth,
        alpha=alpha,
        kappa=kappa,
        sigma_used=sigma,
        constants=gc,
        k_l2norm=k_l2norm,
        meta=dict(meta or {}),
    )


def construct_band(est: EstimateField, sigma: float, spec: PsfSpec, gc: GumbelConstants,
                   alpha: float, k_l2norm: float, meta: dict | None = None) -> ConfidenceBand:
    """Uniform band ``estimate -/+ Phi`` at level 1 - alpha."""
    design = est.design
    if not isinstance(design, DesignSpec):
        raise ValueError("construct_band expects a spatial design; use the timedep module")
    if gc.d != design.d or gc.h_t is not None or not math.isclose(gc.h, design.h, rel_tol=1e-12):
        raise ValueError(
            f"constants (d={gc.d}, h={gc.h}) do not match design (d={design.d}, h={design.h})"
        )
    if spec.dim != design.d:
        raise ValueError(f"PSF dimension {spec.dim} != design dimension {design.d}")
    check_eval_step(est, design.geometry.bandwidths)
    kappa = kappa_for_level(alpha)
    phi = band_halfwidth(sigma, k_l2norm, design, spec.beta, kappa, gc)
    return assemble_band(est, phi, alpha, kappa, sigma, gc, k_l2norm,
                         {"eval_step": est.step, **(meta or {})})


NORMS = ("limit", "finite")


@dataclass(frozen=True)
class BandSetup:
    """Everything a band needs that does not depend on the data."""

    constants: GumbelConstants
    matrix: np.ndarray = field(repr=False, compare=False)
    k_l2norm: float
    norm: str


def kernel_norm(spec: PsfSpec, bump: BumpFn, h: float, norm: str = "limit",
                level: int | None = None) -> float:
    """``||K||_2`` of the limit kernel, or ``||h^beta K_n||_2`` when ``norm == "finite"``."""
    if norm == "limit":
        return limit_kernel(spec, bump, level).l2_norm
    if norm == "finite":
        return h**spec.beta * kn_kernel(spec, bump, h, level).l2_norm
    raise ValueError(f"unknown kernel norm {norm!r}; choose from {NORMS}")


def band_setup(spec: PsfSpec, bump: BumpFn, design: DesignSpec, norm: str = "limit",
               level: int | None = None) -> BandSetup:
    mat, c1 = spectral_moment_matrix(spec, bump, level)
    gc = gumbel_constants(c1, design.d, design.h)
    return BandSetup(gc, mat, kernel_norm(spec, bump, design.h, norm, level), norm)
