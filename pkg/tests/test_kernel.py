from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from deconvband.bump import BumpFn, bump_1d
from deconvband.errors import NumericalError
from deconvband.kernel import (
    KernelTable,
    SpectralKernel,
    compute_Kn,
    compute_limit_kernel,
    expansion_residual,
    kn_kernel,
    limit_kernel,
)
from deconvband.psf import custom_psf, product_laplace, radial_exponential


def _quad_bump(fn, D=0.5):
    val, _ = integrate.quad(lambda u: fn(u) * float(bump_1d(u, D)), -1, 1, points=[-D, D],
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


def test_Kn_at_origin_matches_adaptive_quadrature():
    h = 0.1
    table = compute_Kn(product_laplace(1), BumpFn(0.5, 1), h, extent=1.0, points=3)
    oracle = _quad_bump(lambda u: 1.0 + u * u / h**2)
    assert table.values[1] == pytest.approx(oracle, rel=1e-8)


def test_limit_kernel_at_origin_matches_adaptive_quadrature():
    table = compute_limit_kernel(product_laplace(1), BumpFn(0.5, 1), extent=1.0, points=3)
    assert table.values[1] == pytest.approx(_quad_bump(lambda u: u * u), rel=1e-8)


def test_plancherel_norm_matches_adaptive_quadrature():
    sk = limit_kernel(product_laplace(1), BumpFn(0.5, 1))
    oracle = _quad_bump(lambda u: 2 * math.pi * u**4 * float(bump_1d(u, 0.5)))
    assert sk.l2_norm**2 == pytest.approx(oracle, rel=1e-8)


def test_grid_norm_agrees_with_spectral_norm():
    table = compute_limit_kernel(product_laplace(1), BumpFn(0.5, 1), extent=60.0, points=2401)
    assert table.grid_l2_norm() == pytest.approx(table.l2_norm, rel=1e-4)
    table2 = compute_Kn(product_laplace(2), BumpFn(0.5, 2), 0.5, extent=40.0, points=321)
    assert table2.grid_l2_norm() == pytest.approx(table2.l2_norm, rel=1e-4)


@pytest.mark.parametrize("spec", [product_laplace(1), product_laplace(2), radial_exponential(3)])
def test_kernel_is_even_on_grid(spec):
    table = compute_Kn(spec, BumpFn(0.5, spec.dim), 0.3, extent=5.0, points=11)
    v = table.values
    for axis in range(spec.dim):
        np.testing.assert_allclose(v, np.flip(v, axis=axis), rtol=0, atol=1e-13 * np.max(np.abs(v)))


def test_call_matches_on_grid():
    sk = kn_kernel(product_laplace(2), BumpFn(0.5, 2), 0.4)
    ax = [np.linspace(-3, 3, 7), np.linspace(-1, 2, 5)]
    mesh = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
    np.testing.assert_allclose(sk(mesh), sk.on_grid(ax), rtol=1e-13, atol=1e-14)
    sk1 = kn_kernel(product_laplace(1), BumpFn(0.5, 1), 0.4)
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(sk1(x), sk1.on_grid([x]), rtol=1e-13)
    np.testing.assert_allclose(sk1(x[:, None]).ravel(), sk1(x), rtol=0)


@pytest.mark.parametrize("h", [0.5, 0.2, 0.1, 1.0])
def test_expansion_residual_product_laplace_d2(h):
    spec, bump = product_laplace(2), BumpFn(0.5, 2)
    k_sup = np.max(np.abs(compute_limit_kernel(spec, bump, extent=10.0, points=41).values))
    res = expansion_residual(spec, bump, [h], extent=10.0, points=41)
    assert res[0] < 1e-6 * k_sup


def test_expansion_residual_radial_d1():
    spec, bump = radial_exponential(1), BumpFn(0.5, 1)
    k_sup = np.max(np.abs(compute_limit_kernel(spec, bump, extent=10.0, points=101).values))
    assert np.all(expansion_residual(spec, bump, [0.5, 0.1, 0.01], extent=10.0) < 1e-6 * k_sup)


def test_scaled_kernel_converges_to_limit():
    spec, bump = product_laplace(1), BumpFn(0.5, 1)
    x = np.linspace(-10, 10, 101)
    k = limit_kernel(spec, bump)(x)
    dev = {h: np.max(np.abs(h**spec.beta * kn_kernel(spec, bump, h)(x) - k)) for h in (1e-2, 1e-3)}
    assert dev[1e-3] < 10 * dev[1e-2] * (1e-3 / 1e-2) ** spec.expansion[0].mu


def test_doubling_gate_reports_both_values():
    with pytest.raises(NumericalError) as info:
        compute_Kn(product_laplace(1), BumpFn(0.5, 1), 0.1, extent=5.0, points=11, level=3)
    assert set(info.value.values) == {"coarse", "fine"}
    assert info.value.values["coarse"].shape == (11,)


def test_doubling_gate_passes_at_default_level():
    table = compute_Kn(product_laplace(2), BumpFn(0.5, 2), 0.2, extent=10.0, points=21)
    assert table.meta["level"] == 9


def test_zero_symbol_rejected():
    spec = custom_psf("flat", 1, 2.0, product_laplace(1).fourier, lambda xi: np.zeros(xi.shape[:-1]),
                      None)
    with pytest.raises(ValueError, match="vanishes"):
        compute_limit_kernel(spec, BumpFn(0.5, 1), check=False)


def test_odd_integrand_rejected():
    with pytest.raises(NumericalError, match="not even"):
        SpectralKernel(lambda xi: xi[..., 0] * np.ones(xi.shape[:-1]), 1, level=6)


def test_bandwidth_validation():
    with pytest.raises(ValueError):
        compute_Kn(product_laplace(1), BumpFn(0.5, 1), 1.5)
    with pytest.raises(ValueError):
        kn_kernel(product_laplace(2), BumpFn(0.5, 1), 0.3)


def test_table_json_round_trip():
    table = compute_Kn(product_laplace(2), BumpFn(0.5, 2), 0.3, extent=(4.0, 2.0), points=(9, 5))
    back = KernelTable.from_json(table.to_json())
    np.testing.assert_array_equal(back.values, table.values)
    assert back.extent == (4.0, 2.0) and back.points == (9, 5)
    assert back.l2_norm == table.l2_norm and back.h == 0.3 and back.kind == "Kn"
    assert back.meta["psf"] == "product_laplace" and back.meta["profile"] == "exp-smoothstep"
