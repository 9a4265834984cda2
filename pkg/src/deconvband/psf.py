"""Point-spread functions with closed-form Fourier transforms.

Fourier transforms use the unitary convention
``F f(xi) = (2 pi)^(-d/2) int f(x) exp(-i xi.x) dx``. Every spectral function
in this module takes an array of shape ``(..., d)`` and returns shape ``(...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SpectralFn = Callable[[np.ndarray], np.ndarray]

PRODUCT_LAPLACE = "product_laplace"
RADIAL_EXPONENTIAL = "radial_exponential"


@dataclass(frozen=True)
class ExpansionTerm:
    """One term ``h^mu * conj(F)(factor * F eta)`` of the kernel expansion."""

    mu: float
    factor: SpectralFn = field(compare=False, repr=False)
    label: str = ""


@dataclass(frozen=True)
class PsfSpec:
    """A convolution kernel psi with its ill-posedness data.

    ``fourier`` is F psi, ``symbol`` is the limit ``h^beta / F psi(xi / h)`` as
    ``h -> 0``, ``density`` is psi itself on ``(..., d)`` arrays. ``expansion``
    lists the exact finite expansion of ``h^beta / F psi(xi/h) - symbol(xi)``
    when one exists (``None`` otherwise).
    """

    kind: str
    dim: int
    beta: float
    fourier: SpectralFn = field(compare=False, repr=False)
    symbol: SpectralFn = field(compare=False, repr=False)
    density: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )
    expansion: tuple[ExpansionTerm, ...] | None = field(
        default=None, compare=False, repr=False
    )
    separable: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim}")
        if not self.beta > self.dim / 2:
            raise ValueError(
                f"ill-posedness index beta={self.beta} must exceed d/2={self.dim / 2}"
            )
        if self.expansion is not None:
            mus = [t.mu for t in self.expansion]
            if mus and (mus[0] <= 0 or any(b <= a for a, b in zip(mus, mus[1:]))):
                raise ValueError(f"expansion exponents must satisfy 0 < mu_1 < ... , got {mus}")

    @property
    def cli_name(self) -> str:
        return {PRODUCT_LAPLACE: "product-laplace", RADIAL_EXPONENTIAL: "radial-exp"}.get(
            self.kind, self.kind
        )

    def scaled_inverse(self, xi: np.ndarray, h: float) -> np.ndarray:
        """``h^beta / F psi(xi / h)``."""
        xi = _check_xi(self, xi)
        return h**self.beta / self.fourier(xi / h)


def _check_xi(spec: PsfSpec, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0 or xi.shape[-1] != spec.dim:
        raise ValueError(
            f"frequency has trailing length {xi.shape[-1] if xi.ndim else 0}, "
            f"expected d={spec.dim} for {spec.kind}"
        )
    return xi


def fourier_psf(spec: PsfSpec, xi) -> np.ndarray | float:
    """F psi at ``xi``; a length-d vector gives a scalar."""
    xi = _check_xi(spec, xi)
    out = spec.fourier(xi)
    return float(out) if np.ndim(out) == 0 else out


def limit_symbol(spec: PsfSpec, xi) -> np.ndarray | float:
    """Psi(xi) = lim_{h->0} h^beta / F psi(xi / h)."""
    xi = _check_xi(spec, xi)
    out = spec.symbol(xi)
    return float(out) if np.ndim(out) == 0 else out


def expansion_terms(spec: PsfSpec) -> list[ExpansionTerm]:
    """Exact expansion of ``h^beta/F psi(xi/h) - Psi(xi)`` in powers of h.

    Raises:
        NotImplementedError: the expansion depends on n (or is unknown) for ``spec``.
    """
    if spec.expansion is None:
        raise NotImplementedError(
            f"no exact n-free kernel expansion available for {spec.kind} in d={spec.dim}"
        )
    return list(spec.expansion)


def _elementary_symmetric(values: np.ndarray, order: int) -> np.ndarray:
    # values: (..., d); e_order of the d entries along the last axis
    d = values.shape[-1]
    e = [np.ones(values.shape[:-1])] + [np.zeros(values.shape[:-1]) for _ in range(d)]
    for j in range(d):
        v = values[..., j]
        for k in range(min(j + 1, d), 0, -1):
            e[k] = e[k] + v * e[k - 1]
    return e[order]


def product_laplace(dim: int) -> PsfSpec:
    """psi(x) = 2^-d exp(-sum |x_j|); F psi = (2 pi)^(-d/2) prod (1 + xi_j^2)^-1."""
    c = (2 * math.pi) ** (dim / 2)

    def fourier(xi):
        return np.prod(1.0 / (1.0 + xi**2), axis=-1) / c

    def symbol(xi):
        return c * np.prod(xi**2, axis=-1)

    def density(x):
        x = np.asarray(x, dtype=float)
        return 2.0**-dim * np.exp(-np.sum(np.abs(x), axis=-1))

    # h^{2d} prod (1 + xi_j^2/h^2) = prod (h^2 + xi_j^2); the h^{2p} coefficient
    # is the elementary symmetric polynomial of degree d - p in xi_j^2.
    terms = []
    for p in range(1, dim + 1):
        order = dim - p

        def factor(xi, order=order):
            return c * _elementary_symmetric(np.asarray(xi, dtype=float) ** 2, order)

        terms.append(ExpansionTerm(mu=2.0 * p, factor=factor, label=f"e_{order}(xi^2)"))
    return PsfSpec(
        kind=PRODUCT_LAPLACE,
        dim=dim,
        beta=2.0 * dim,
        fourier=fourier,
        symbol=symbol,
        density=density,
        expansion=tuple(terms),
        separable=True,
    )


def radial_exponential(dim: int) -> PsfSpec:
    """psi(x) = 2^(-(d+1)/2) exp(-|x|); beta = d + 1."""
    q = (dim + 1) / 2
    gam = math.gamma(q)
    c = math.sqrt(2 * math.pi) / gam

    def fourier(xi):
        return gam / math.sqrt(2 * math.pi) * (1.0 + np.sum(xi**2, axis=-1)) ** -q

    def symbol(xi):
        return c * np.sum(xi**2, axis=-1) ** q

    def density(x):
        x = np.asarray(x, dtype=float)
        return 2.0**-q * np.exp(-np.sqrt(np.sum(x**2, axis=-1)))

    terms = None
    if dim % 2 == 1:
        qi = (dim + 1) // 2
        terms = []
        for j in range(1, qi + 1):
            coef = c * math.comb(qi, j)
            power = qi - j

            def factor(xi, coef=coef, power=power):
                return coef * np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1) ** power

            terms.append(ExpansionTerm(mu=2.0 * j, factor=factor, label=f"|xi|^{2 * power}"))
        terms = tuple(terms)
    return PsfSpec(
        kind=RADIAL_EXPONENTIAL,
        dim=dim,
        beta=float(dim + 1),
        fourier=fourier,
        symbol=symbol,
        density=density,
        expansion=terms,
        separable=dim == 1,
    )


def custom_psf(
    kind: str,
    dim: int,
    beta: float,
    fourier: SpectralFn,
    symbol: SpectralFn,
    expansion: Sequence[tuple[float, SpectralFn]] | None,
    density: Callable[[np.ndarray], np.ndarray] | None = None,
    probe: float = 10.0,
) -> PsfSpec:
    """Build a user-defined PSF.

    The caller supplies everything the catalog PSFs carry; the limit symbol and
    expansion cannot be derived automatically. ``fourier`` is probed for
    positivity on a coarse grid over ``[-probe, probe]^d``.
    """
    terms = None
    if expansion is not None:
        terms = tuple(ExpansionTerm(mu=float(mu), factor=fn) for mu, fn in expansion)
    spec = PsfSpec(
        kind=kind, dim=dim, beta=float(beta), fourier=fourier, symbol=symbol,
        density=density, expansion=terms,
    )
    axis = np.linspace(-probe, probe, 21 if dim <= 2 else 7)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    if not np.all(np.asarray(fourier(mesh)) > 0):
        raise ValueError(f"Fourier transform of {kind} must be strictly positive")
    return spec


_CATALOG: dict[str, Callable[[int], PsfSpec]] = {
    "product-laplace": product_laplace,
    "radial-exp": radial_exponential,
    PRODUCT_LAPLACE: product_laplace,
    RADIAL_EXPONENTIAL: radial_exponential,
}


def register_psf(name: str, factory: Callable[[int], PsfSpec]) -> None:
    """Make ``factory(dim)`` available to :func:`get_psf` (and the CLI) as ``name``."""
    _CATALOG[name] = factory


def get_psf(name: str, dim: int) -> PsfSpec:
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown PSF {name!r}; choose from {sorted(_CATALOG)}") from None
    return factory(dim)
