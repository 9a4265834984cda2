"""Deconvolution estimator on an equispaced design.

The estimate at ``x`` is ``c * sum_k Y_k K_n((x - x_k) / h)`` with
``c = (2 pi)^-d (n a_n h)^-d``. Three numerically equivalent evaluation paths
are offered:

* ``direct``   kernel values at the exact offsets, then the weighted sum (ground truth);
* ``fft``      kernel sampled on the design lattice and an FFT convolution;
* ``spectral`` empirical Fourier coefficients at the quadrature nodes, multiplied
  by the kernel's spectral weights and transformed back (fastest for Monte Carlo).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.signal import fftconvolve

from .bump import BumpFn
from .kernel import KIND_KN, KernelTable, SpectralKernel, default_level, spectral_mesh, spectral_nodes
from .psf import PsfSpec

METHODS = ("direct", "fft", "spectral")


@dataclass(frozen=True)
class GridGeometry:
    """Per-axis layout of a symmetric equispaced design and the estimator prefactor."""

    half_counts: tuple[int, ...]
    steps: tuple[float, ...]
    bandwidths: tuple[float, ...]
    prefactor: float

    @property
    def dim(self) -> int:
        return len(self.half_counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2 * n + 1 for n in self.half_counts)

    def data_axes(self) -> list[np.ndarray]:
        return [np.arange(-n, n + 1) * s for n, s in zip(self.half_counts, self.steps)]


@dataclass(frozen=True)
class DesignSpec:
    """Design points ``x_k = k / (n a_n)``, ``k in {-n..n}^d``, and bandwidth h."""

    d: int
    n: int
    a_n: float
    h: float

    def __post_init__(self) -> None:
        if self.d < 1 or self.n < 1:
            raise ValueError(f"need d >= 1 and n >= 1, got d={self.d}, n={self.n}")
        if not 0.0 < self.a_n < 1.0:
            raise ValueError(f"a_n must lie in (0, 1), got {self.a_n}")
        if not self.n * self.a_n > 1.0:
            raise ValueError(f"design must expand: n * a_n = {self.n * self.a_n} <= 1")
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"bandwidth h must lie in (0, 1), got {self.h}")

    @property
    def step(self) -> float:
        return 1.0 / (self.n * self.a_n)

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.n + 1,) * self.d

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(
            half_counts=(self.n,) * self.d,
            steps=(self.step,) * self.d,
            bandwidths=(self.h,) * self.d,
            prefactor=((2 * math.pi) * self.n * self.a_n * self.h) ** (-self.d),
        )

    def axis(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1) * self.step

    def to_json(self) -> dict:
        return {"d": self.d, "n": self.n, "a_n": self.a_n, "h": self.h}


@dataclass
class Observations:
    """Responses ``Y_k`` on the full design grid, indexed ``y[k_1 + n, ..., k_d + n]``."""

    design: DesignSpec  # or a TimedepDesign; only `.geometry` is used
    y: np.ndarray

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        shape = self.design.geometry.shape
        if self.y.shape != shape:
            raise ValueError(f"observations have shape {self.y.shape}, design needs {shape}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observations contain non-finite values")


@dataclass
class EstimateField:
    """Estimate on the tensor evaluation grid ``axes[0] x ... x axes[d-1]``."""

    axes: list[np.ndarray]
    values: np.ndarray
    design: object
    kernel_id: str
    method: str = "direct"

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("estimate contains non-finite values")

    @property
    def step(self) -> float:
        """Largest spacing of the evaluation grid."""
        return max((float(np.max(np.diff(a))) if a.size > 1 else 0.0) for a in self.axes)

    def to_json(self) -> dict:
        return {
            "design": self.design.to_json(),
            "kernel": self.kernel_id,
            "method": self.method,
            "grid": {"axes": [a.tolist() for a in self.axes], "step": self.step},
            "estimate": self.values.reshape(-1).tolist(),
        }


KernelLike = Union[SpectralKernel, KernelTable]


def default_eval_axes(dim: int, points: int = 101) -> list[np.ndarray]:
    return [np.linspace(0.0, 1.0, points) for _ in range(dim)]


def lattice_eval_axes(design: DesignSpec) -> list[np.ndarray]:
    """Design points that fall inside [0, 1] on every axis (the FFT-friendly grid)."""
    kmax = min(design.n, int(math.floor(design.n * design.a_n + 1e-9)))
    return [np.arange(0, kmax + 1) * design.step for _ in range(design.d)]


def check_eval_axes(axes: Sequence[np.ndarray], dim: int) -> list[np.ndarray]:
    axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in axes]
    if len(axes) != dim:
        raise ValueError(f"need {dim} evaluation axes, got {len(axes)}")
    for a in axes:
        if a.ndim != 1 or a.size == 0:
            raise ValueError("evaluation axes must be non-empty 1-d arrays")
        if np.min(a) < -1e-12 or np.max(a) > 1 + 1e-12:
            raise ValueError("evaluation points must lie in the unit cube [0, 1]^d")
    return axes


def _resolve_kernel(kernel: KernelLike, design, kind: str = KIND_KN) -> SpectralKernel:
    sk = kernel.source if isinstance(kernel, KernelTable) else kernel
    if sk is None:
        raise ValueError("kernel table carries no spectral source for on-demand evaluation")
    if sk.kind != kind:
        raise ValueError(f"estimator needs a {kind} kernel, got {sk.kind}")
    if sk.h is None or not math.isclose(sk.h, design.h, rel_tol=1e-12):
        raise ValueError(f"kernel bandwidth {sk.h} does not match design bandwidth {design.h}")
    if sk.dim != design.geometry.dim:
        raise ValueError(f"kernel dimension {sk.dim} != design dimension {design.geometry.dim}")
    return sk


def direct_sum(y: np.ndarray, sk: SpectralKernel, geom: GridGeometry,
               eval_axes: Sequence[np.ndarray]) -> np.ndarray:
    """``prefactor * sum_k y_k K((x - x_k) / h)`` with K evaluated at every exact offset."""
    offs = [(e[:, None] - x[None, :]) / bw
            for e, x, bw in zip(eval_axes, geom.data_axes(), geom.bandwidths)]
    d = len(offs)
    if d == 1:
        return geom.prefactor * (sk(offs[0]) @ y)
    i1, k1 = offs[0].shape
    per_row = k1 * math.prod(o.size for o in offs[1:])
    rows = max(1, 4_000_000 // per_row)
    out = np.empty([o.shape[0] for o in offs])
    k_axes = [1 + 2 * a for a in range(d)]
    for s in range(0, i1, rows):
        blk = offs[0][s:s + rows]
        t = sk.on_grid([blk.ravel()] + [o.ravel() for o in offs[1:]])
        t = t.reshape(tuple(itertools.chain([blk.shape[0], k1], *(o.shape for o in offs[1:]))))
        out[s:s + blk.shape[0]] = np.tensordot(t, y, axes=(k_axes, list(range(d))))
    return geom.prefactor * out


def fft_sum(y: np.ndarray, sk: SpectralKernel, geom: GridGeometry,
            eval_axes: Sequence[np.ndarray]) -> np.ndarray:
    """Same sum via FFT convolution with the kernel sampled on the design lattice.

    Each evaluation coordinate is split into a lattice point plus a sub-step
    shift; one convolution runs per distinct shift combination, so lattice-aligned
    grids need exactly one.
    """
    per_axis = []
    for e, s in zip(eval_axes, geom.steps):
        k0 = np.floor(e / s + 1e-9).astype(int)
        shift = e - k0 * s
        shift[np.abs(shift) < 1e-12 * s] = 0.0
        keys = np.round(shift / s, 10)
        groups = [(float(shift[keys == u][0]), np.nonzero(keys == u)[0]) for u in np.unique(keys)]
        per_axis.append((k0, groups))
    out = np.empty([e.size for e in eval_axes])
    for combo in itertools.product(*(g for _, g in per_axis)):
        offsets, picks, targets = [], [], []
        for (k0, _), (shift, idx), n, s, bw in zip(
            per_axis, combo, geom.half_counts, geom.steps, geom.bandwidths
        ):
            kk = k0[idx]
            lo, hi = kk.min() - n, kk.max() + n
            offsets.append((np.arange(lo, hi + 1) * s + shift) / bw)
            picks.append(kk + n - lo)
            targets.append(idx)
        conv = fftconvolve(y, sk.on_grid(offsets), mode="full")
        out[np.ix_(*targets)] = conv[np.ix_(*picks)]
    return geom.prefactor * out


class EstimatorPlan:
    """Precomputed linear map from observations to the estimate on fixed eval axes.

    Built from the kernel's spectral weights, so applying it is the spectral path.
    For d == 1 the map is stored as a dense (eval x data) matrix.
    """

    def __init__(self, sk: SpectralKernel, geom: GridGeometry, eval_axes: Sequence[np.ndarray]):
        self.geom = geom
        self.eval_axes = [np.asarray(a, dtype=float) for a in eval_axes]
        self.kernel_id = sk.id
        data_axes = geom.data_axes()
        if geom.dim == 1:
            u = sk.half_nodes
            wh = sk.half_weights
            ze = self.eval_axes[0] / geom.bandwidths[0]
            ce, se = np.cos(np.outer(ze, u)) * wh, np.sin(np.outer(ze, u)) * wh
            zd = data_axes[0] / geom.bandwidths[0]
            self.matrix = np.empty((ze.size, zd.size))
            for s in range(0, zd.size, 2048):
                arg = np.outer(zd[s:s + 2048], u)
                self.matrix[:, s:s + 2048] = ce @ np.cos(arg).T + se @ np.sin(arg).T
            self.matrix *= geom.prefactor
        else:
            self.matrix = None
            nodes = sk.nodes
            self.forward = [np.exp(-1j * np.outer(nodes, x / bw))
                            for x, bw in zip(data_axes, geom.bandwidths)]
            self.backward = [np.exp(1j * np.outer(e / bw, nodes))
                             for e, bw in zip(self.eval_axes, geom.bandwidths)]
            self.weights = sk.weights

    def __call__(self, y: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ y
        t = y
        for f in self.forward:
            t = np.tensordot(t, f, axes=([0], [1]))
        t = t * self.weights
        for b in self.backward:
            t = np.tensordot(t, b, axes=([0], [1]))
        return self.geom.prefactor * t.real


def estimate(
    obs: Observations,
    kernel: KernelLike,
    eval_axes: Sequence[np.ndarray] | int | None = None,
    method: str = "direct",
) -> EstimateField:
    """Evaluate the deconvolution estimate on a tensor grid in [0, 1]^d.

    Args:
        obs: gridded observations.
        kernel: a K_n spectral kernel (or a table carrying one) with the design's h.
        eval_axes: per-axis evaluation coordinates, a point count per axis, or
            None for 101 points per axis.
        method: "direct", "fft" or "spectral".
    """
    geom = obs.design.geometry
    sk = _resolve_kernel(kernel, obs.design)
    axes = _axes(eval_axes, geom.dim)
    if method == "direct":
        values = direct_sum(obs.y, sk, geom, axes)
    elif method == "fft":
        values = fft_sum(obs.y, sk, geom, axes)
    elif method == "spectral":
        values = EstimatorPlan(sk, geom, axes)(obs.y)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return EstimateField(axes=axes, values=values, design=obs.design, kernel_id=sk.id,
                         method=method)


def _axes(eval_axes, dim: int) -> list[np.ndarray]:
    if eval_axes is None:
        eval_axes = 101
    if isinstance(eval_axes, (int, np.integer)):
        return default_eval_axes(dim, int(eval_axes))
    return check_eval_axes(eval_axes, dim)


def empirical_fourier(obs: Observations, xi) -> np.ndarray | complex:
    """``(2 pi)^(-d/2) (n a_n)^-d sum_k Y_k exp(-i xi . x_k)`` at ``xi`` of shape (..., d)."""
    design = obs.design
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0 or xi.shape[-1] != design.d:
        raise ValueError(f"frequency needs trailing length {design.d}, got shape {xi.shape}")
    pts = xi.reshape(-1, design.d)
    x = design.axis()
    t = np.einsum("pk,k...->p...", np.exp(-1j * np.outer(pts[:, 0], x)), obs.y)
    for a in range(1, design.d):
        t = np.einsum("pk,pk...->p...", np.exp(-1j * np.outer(pts[:, a], x)), t)
    t = t / ((2 * math.pi) ** (design.d / 2) * (design.n * design.a_n) ** design.d)
    return complex(t[0]) if xi.ndim == 1 else t.reshape(xi.shape[:-1])


def estimate_via_empirical_fourier(
    obs: Observations,
    spec: PsfSpec,
    bump: BumpFn,
    eval_axes: Sequence[np.ndarray] | int | None = None,
    level: int | None = None,
) -> EstimateField:
    """The estimate in its spectral form.

    ``(2 pi)^-d int F g_hat(xi) F eta(h xi) / F psi(xi) exp(i xi . x) dxi``, with
    ``F g_hat`` from :func:`empirical_fourier`; substituting ``xi = w / h`` puts the
    integral on ``[-1, 1]^d``.
    """
    design = obs.design
    d, h = design.d, design.h
    axes = _axes(eval_axes, d)
    level = default_level(d) if level is None else level
    nodes, step = spectral_nodes(level)
    mesh = spectral_mesh(nodes, d)
    integrand = empirical_fourier(obs, mesh / h) * bump(mesh) / spec.fourier(mesh / h)
    t = integrand
    for e in axes:
        t = np.tensordot(t, np.exp(1j * np.outer(e / h, nodes)), axes=([0], [1]))
    values = (t.real * step**d) / ((2 * math.pi) ** d * h**d)
    return EstimateField(axes=axes, values=values, design=design,
                         kernel_id=f"empirical-fourier;level={level}", method="empirical_fourier")
