"""Deconvolution kernels obtained by spectral cut-off.

A kernel here is ``K(x) = (2 pi)^(-d/2) int_{[-1,1]^d} F(xi) exp(i xi.x) dxi`` for
a spectral function ``F`` that is even in every coordinate. The integral is a
tensor-product midpoint rule with ``2**level`` nodes per axis; the bump factor
makes the integrand vanish to all orders at the boundary, so the rule
converges faster than any power of the node count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bump import BumpFn
from .errors import NumericalError
from .psf import PsfSpec, expansion_terms

KIND_KN = "Kn"
KIND_LIMIT = "K_limit"
KIND_TIMEDEP = "K_timedep"

DEFAULT_LEVEL = {1: 12, 2: 9, 3: 7}
_CHUNK = 1 << 22


def default_level(dim: int) -> int:
    return DEFAULT_LEVEL.get(dim, 6 if dim == 4 else 5)


def spectral_nodes(level: int) -> tuple[np.ndarray, float]:
    """Midpoint nodes on [-1, 1] (exactly symmetric) and their common weight."""
    n = 2**level
    step = 2.0 / n
    return -1.0 + (np.arange(n) + 0.5) * step, step


def spectral_mesh(nodes: np.ndarray, dim: int) -> np.ndarray:
    return np.stack(np.meshgrid(*([nodes] * dim), indexing="ij"), axis=-1)


class SpectralKernel:
    """Kernel defined by an even spectral integrand on ``[-1, 1]^dim``.

    Values are direct cosine sums over the quadrature nodes; nothing is
    interpolated. ``weights`` holds the full-grid quadrature weights including
    the ``(2 pi)^(-d/2)`` factor, so ``K(x) = sum_j weights_j exp(i xi_j . x)``.
    """

    def __init__(
        self,
        integrand: Callable[[np.ndarray], np.ndarray],
        dim: int,
        level: int | None = None,
        kind: str = KIND_KN,
        h: float | None = None,
        meta: dict | None = None,
        symmetry_tol: float = 1e-10,
    ):
        self.dim = dim
        self.level = default_level(dim) if level is None else int(level)
        self.kind = kind
        self.h = h
        self.meta = dict(meta or {})
        self.nodes, self.step = spectral_nodes(self.level)
        values = np.asarray(integrand(spectral_mesh(self.nodes, dim)), dtype=float)
        if values.shape != (self.nodes.size,) * dim:
            raise ValueError(f"integrand returned shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("spectral integrand is not finite on the quadrature grid")
        scale = float(np.max(np.abs(values))) if values.size else 0.0
        for axis in range(dim):
            # an odd part would leave an imaginary residue in the inverse transform
            asym = float(np.max(np.abs(values - np.flip(values, axis=axis))))
            if asym > symmetry_tol * max(scale, np.finfo(float).tiny):
                raise NumericalError(
                    "spectral integrand is not even; inverse transform is not real",
                    asymmetry=asym,
                    scale=scale,
                )
        self.spectrum = values
        self.weights = values * (self.step**dim / (2 * math.pi) ** (dim / 2))
        half = self.nodes.size // 2
        self.half_nodes = self.nodes[half:]
        self.half_weights = self.weights[(slice(half, None),) * dim] * 2.0**dim
        self.l2_norm = math.sqrt(float(np.sum(values**2)) * self.step**dim)

    @property
    def id(self) -> str:
        parts = [self.kind, f"d={self.dim}", f"level={self.level}"]
        if self.h is not None:
            parts.append(f"h={self.h!r}")
        parts += [f"{k}={v}" for k, v in sorted(self.meta.items())]
        return ";".join(parts)

    def __call__(self, x) -> np.ndarray:
        """Kernel values at points ``x`` of shape ``(..., dim)`` (any shape when dim == 1)."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            shape = x.shape
            pts = x.reshape(-1, 1)
        else:
            if x.ndim == 0 or x.shape[-1] != self.dim:
                raise ValueError(f"points need trailing length {self.dim}, got shape {x.shape}")
            shape = x.shape[:-1]
            pts = x.reshape(-1, self.dim)
        u = self.half_nodes
        nh = u.size
        flat_w = self.half_weights.reshape(nh, -1)
        rows = max(1, _CHUNK // (nh ** max(self.dim - 1, 1) * 4))
        out = np.empty(pts.shape[0])
        for start in range(0, pts.shape[0], rows):
            p = pts[start:start + rows]
            acc = np.cos(p[:, 0, None] * u) @ flat_w
            for a in range(1, self.dim):
                acc = acc.reshape(p.shape[0], nh, -1)
                acc = np.einsum("pj,pjr->pr", np.cos(p[:, a, None] * u), acc)
            out[start:start + rows] = acc.reshape(-1)
        return out.reshape(shape)

    def on_grid(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Values on the tensor grid ``axes[0] x ... x axes[dim-1]``."""
        if len(axes) != self.dim:
            raise ValueError(f"need {self.dim} axes, got {len(axes)}")
        t = self.half_weights
        for ax in axes:
            c = np.cos(np.outer(np.asarray(ax, dtype=float), self.half_nodes))
            # contracts the leading spectral axis and appends the spatial one
            t = np.tensordot(t, c, axes=([0], [1]))
        return t


@dataclass
class KernelTable:
    """Sampled kernel on the grid ``linspace(-extent, extent, points)`` per axis."""

    kind: str
    values: np.ndarray
    extent: tuple[float, ...]
    points: tuple[int, ...]
    l2_norm: float
    h: float | None = None
    meta: dict = field(default_factory=dict)
    source: SpectralKernel | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.l2_norm > 0:
            raise ValueError("kernel vanishes identically (requires K != 0)")
        if self.values.shape != tuple(self.points):
            raise ValueError(f"values shape {self.values.shape} != points {self.points}")

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def axes(self) -> list[np.ndarray]:
        return grid_axes(self.extent, self.points)

    def grid_l2_norm(self) -> float:
        """Trapezoid-rule L2 norm of the tabulated values."""
        v = self.values**2
        for a, ax in enumerate(self.axes):
            v = np.trapezoid(v, ax, axis=0) if hasattr(np, "trapezoid") else np.trapz(v, ax, axis=0)
        return math.sqrt(float(v))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "h": self.h,
            "grid": {"extent": list(self.extent), "points": list(self.points)},
            "l2_norm": self.l2_norm,
            "meta": self.meta,
            "values": self.values.reshape(-1).tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "KernelTable":
        points = tuple(int(p) for p in data["grid"]["points"])
        return cls(
            kind=data["kind"],
            values=np.asarray(data["values"], dtype=float).reshape(points),
            extent=tuple(float(e) for e in data["grid"]["extent"]),
            points=points,
            l2_norm=float(data["l2_norm"]),
            h=data.get("h"),
            meta=data.get("meta", {}),
        )


def grid_axes(extent, points) -> list[np.ndarray]:
    return [np.linspace(-e, e, p) for e, p in zip(extent, points)]


def _grid_spec(dim: int, extent, points) -> tuple[tuple[float, ...], tuple[int, ...]]:
    ext = tuple(float(e) for e in np.broadcast_to(np.asarray(extent, dtype=float), (dim,)))
    pts = tuple(int(p) for p in np.broadcast_to(np.asarray(points), (dim,)))
    if any(e <= 0 for e in ext) or any(p < 2 for p in pts):
        raise ValueError(f"grid needs positive extent and >= 2 points, got {ext}, {pts}")
    return ext, pts


def _meta(spec: PsfSpec, bump: BumpFn) -> dict:
    return {"psf": spec.kind, "D": bump.D, "profile": bump.profile}


def kn_kernel(spec: PsfSpec, bump: BumpFn, h: float, level: int | None = None) -> SpectralKernel:
    """K_n with spectral integrand ``F eta(xi) / F psi(xi / h)``."""
    if not 0.0 < h:
        raise ValueError(f"bandwidth must be positive, got {h}")
    _check_dims(spec, bump)
    return SpectralKernel(
        lambda xi: bump(xi) / spec.fourier(xi / h),
        spec.dim, level, kind=KIND_KN, h=float(h), meta=_meta(spec, bump),
    )


def limit_kernel(spec: PsfSpec, bump: BumpFn, level: int | None = None) -> SpectralKernel:
    """K with spectral integrand ``Psi(xi) F eta(xi)``."""
    _check_dims(spec, bump)
    return SpectralKernel(
        lambda xi: spec.symbol(xi) * bump(xi),
        spec.dim, level, kind=KIND_LIMIT, meta=_meta(spec, bump),
    )


def expansion_kernels(
    spec: PsfSpec, bump: BumpFn, level: int | None = None
) -> list[tuple[float, SpectralKernel]]:
    """``(mu_p, conj(F)(f_p))`` for every term of the exact kernel expansion."""
    _check_dims(spec, bump)
    out = []
    for term in expansion_terms(spec):
        sk = SpectralKernel(
            lambda xi, fn=term.factor: fn(xi) * bump(xi),
            spec.dim, level, kind=f"f(mu={term.mu:g})", meta=_meta(spec, bump),
        )
        out.append((term.mu, sk))
    return out


def _check_dims(spec: PsfSpec, bump: BumpFn) -> None:
    if spec.dim != bump.dim:
        raise ValueError(f"PSF dimension {spec.dim} != bump dimension {bump.dim}")


def _tabulate(
    make: Callable[[int | None], SpectralKernel],
    dim: int,
    extent,
    points,
    level: int | None,
    check: bool,
    tol: float,
) -> KernelTable:
    ext, pts = _grid_spec(dim, extent, points)
    sk = make(level)
    axes = grid_axes(ext, pts)
    values = sk.on_grid(axes)
    if check:
        fine = make(sk.level + 1).on_grid(axes)
        scale = float(np.max(np.abs(values)))
        diff = float(np.max(np.abs(fine - values)))
        if diff > tol * scale:
            raise NumericalError(
                f"kernel quadrature not converged at level {sk.level}: "
                f"max change {diff:.3e} vs tolerance {tol * scale:.3e}",
                coarse=values,
                fine=fine,
            )
    return KernelTable(
        kind=sk.kind, values=values, extent=ext, points=pts, l2_norm=sk.l2_norm,
        h=sk.h, meta={**sk.meta, "level": sk.level}, source=sk,
    )


def compute_Kn(
    spec: PsfSpec,
    bump: BumpFn,
    h: float,
    extent=10.0,
    points=201,
    level: int | None = None,
    check: bool = True,
    tol: float = 1e-8,
) -> KernelTable:
    """Tabulate K_n on a symmetric grid; ``check`` enforces the doubling gate."""
    if not 0.0 < h < 1.0:
        raise ValueError(f"bandwidth h must lie in (0, 1), got {h}")
    return _tabulate(lambda lv: kn_kernel(spec, bump, h, lv), spec.dim, extent, points,
                     level, check, tol)


def compute_limit_kernel(
    spec: PsfSpec,
    bump: BumpFn,
    extent=10.0,
    points=201,
    level: int | None = None,
    check: bool = True,
    tol: float = 1e-8,
) -> KernelTable:
    return _tabulate(lambda lv: limit_kernel(spec, bump, lv), spec.dim, extent, points,
                     level, check, tol)


def expansion_residual(
    spec: PsfSpec,
    bump: BumpFn,
    hs: Sequence[float],
    extent=10.0,
    points=101,
    level: int | None = None,
) -> np.ndarray:
    """Sup over the grid of ``h^beta K_n - K - sum_p h^mu_p conj(F) f_p`` for each h."""
    terms = expansion_kernels(spec, bump, level)
    ext, pts = _grid_spec(spec.dim, extent, points)
    axes = grid_axes(ext, pts)
    k_lim = limit_kernel(spec, bump, level).on_grid(axes)
    term_vals = [(mu, sk.on_grid(axes)) for mu, sk in terms]
    out = []
    for h in hs:
        res = h**spec.beta * kn_kernel(spec, bump, h, level).on_grid(axes) - k_lim
        for mu, vals in term_vals:
            res -= h**mu * vals
        out.append(float(np.max(np.abs(res))))
    return np.asarray(out)
