"""Smooth compactly supported spectral windows (bump functions)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROFILE = "exp-smoothstep"


def _exp_ramp(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smoothstep(t) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, ``g(t)/(g(t)+g(1-t))`` between."""
    t = np.asarray(t, dtype=float)
    a = _exp_ramp(t)
    b = _exp_ramp(1.0 - t)
    return a / (a + b)


def bump_1d(u, D: float) -> np.ndarray:
    """Even 1-d profile: 1 on ``[-D, D]``, 0 outside ``(-1, 1)``."""
    a = np.abs(np.asarray(u, dtype=float))
    ramp = smoothstep((1.0 - np.minimum(a, 1.0)) / (1.0 - D))
    return np.where(a <= D, 1.0, np.where(a >= 1.0, 0.0, ramp))


@dataclass(frozen=True)
class BumpFn:
    """Tensor-product bump ``prod_j bump_1d(xi_j, D)`` on ``R^dim``."""

    D: float = 0.5
    dim: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.D < 1.0:
            raise ValueError(f"flat-top half-width D must lie in (0, 1), got {self.D}")
        if self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim}")

    @property
    def profile(self) -> str:
        return PROFILE

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 0 or xi.shape[-1] != self.dim:
            raise ValueError(f"expected trailing length {self.dim}, got shape {xi.shape}")
        return np.prod(bump_1d(xi, self.D), axis=-1)

    def with_dim(self, dim: int) -> "BumpFn":
        return BumpFn(D=self.D, dim=dim)

    def describe(self) -> dict:
        return {"D": self.D, "dim": self.dim, "profile": PROFILE}


def eval_bump(b: BumpFn, xi) -> np.ndarray | float:
    out = b(xi)
    return float(out) if np.ndim(out) == 0 else out
