from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from deconvband.bands import (
    ConfidenceBand,
    GumbelConstants,
    band_halfwidth,
    band_setup,
    check_band_invariants,
    construct_band,
    estimate_sigma,
    gumbel_cdf,
    gumbel_constants,
    kappa_for_level,
    norming_constant,
    spectral_moment_matrix,
)
from deconvband.bump import BumpFn
from deconvband.errors import DomainError
from deconvband.estimator import DesignSpec, Observations, estimate
from deconvband.kernel import kn_kernel, limit_kernel
from deconvband.psf import product_laplace, radial_exponential
from deconvband.timedep import TimedepDesign

SPEC1, BUMP1 = product_laplace(1), BumpFn(0.5, 1)


def _gc(cn3: float = 1.0, d: int = 1, h: float = 1.0) -> GumbelConstants:
    # Cn2 chosen so that the (d-1) correction vanishes for d=1
    return GumbelConstants(C1=1.0, Cn2=math.exp(cn3**2 / 2), Cn3=cn3, d=d, h=h)


# ---------------------------------------------------------------- kappa


@pytest.mark.parametrize("alpha", [0.05, 0.10, 0.01, 0.5])
def test_kappa_solves_cdf_equation(alpha):
    root = optimize.brentq(lambda k: float(gumbel_cdf(k)) - (1 - alpha), -10, 50, xtol=1e-14)
    assert kappa_for_level(alpha) == pytest.approx(root, abs=1e-10)


def test_kappa_reference_values():
    assert kappa_for_level(0.05) == pytest.approx(3.663342, abs=1e-6)
    assert kappa_for_level(0.10) == pytest.approx(2.943515, abs=1e-6)
    assert kappa_for_level(1 - math.exp(-2)) == pytest.approx(0.0, abs=1e-14)


def test_kappa_round_trip_and_monotone():
    alphas = np.linspace(0.01, 0.99, 99)
    ks = np.array([kappa_for_level(a) for a in alphas])
    np.testing.assert_allclose(gumbel_cdf(ks), 1 - alphas, atol=1e-12)
    assert np.all(np.diff(ks) < 0)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_kappa_rejects_bad_alpha(alpha):
    with pytest.raises(ValueError, match="alpha"):
        kappa_for_level(alpha)


# ---------------------------------------------------------------- norming constants


def test_norming_constant_values():
    assert norming_constant(math.exp(0.5), 0) == pytest.approx(1.0, abs=1e-15)
    assert norming_constant(math.exp(0.5), 1) == pytest.approx(1.0, abs=1e-15)
    # d=2, 2 ln Cn2 = 4
    assert norming_constant(math.e**2, 1) == pytest.approx(2 + math.log(4) / 4, abs=1e-12)
    assert norming_constant(math.e**2, 1) == pytest.approx(2.346574, abs=1e-6)


def test_gumbel_constants_formula():
    c1, h = 15.0, 0.05
    gc = gumbel_constants(c1, 1, h)
    cn2 = math.sqrt(c1 / (2 * math.pi) ** 2) / h
    assert gc.Cn2 == pytest.approx(cn2, rel=1e-14)
    assert gc.Cn3 == pytest.approx(math.sqrt(2 * math.log(cn2)), rel=1e-14)
    gc2 = gumbel_constants(400.0, 2, 0.05)
    assert gc2.Cn2 == pytest.approx(math.sqrt(400.0 / (2 * math.pi) ** 3) / 0.05**2, rel=1e-14)


def test_gumbel_constants_domain():
    with pytest.raises(DomainError, match="Cn2"):
        gumbel_constants(15.0, 1, 0.9)
    with pytest.raises(ValueError):
        GumbelConstants(C1=0.0, Cn2=2.0, Cn3=1.0, d=1, h=0.1)


# ---------------------------------------------------------------- moment matrix


def _quad_c1(spec, bump):
    f2 = lambda v: float(spec.symbol(np.array([[v]]))[0] * bump(np.array([[v]]))[0]) ** 2
    num = integrate.quad(lambda v: f2(v) * v * v, -1, 1, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    den = integrate.quad(f2, -1, 1, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return (2 * math.pi) ** 2 * num / den


@pytest.mark.parametrize("D", [0.5, 0.25])
def test_c1_matches_quadrature(D):
    bump = BumpFn(D, 1)
    _, c1 = spectral_moment_matrix(SPEC1, bump)
    assert c1 == pytest.approx(_quad_c1(SPEC1, bump), rel=1e-6)


def test_c1_stable_under_refinement():
    for spec, bump, lev in ((SPEC1, BUMP1, 12), (product_laplace(2), BumpFn(0.5, 2), 8)):
        a = spectral_moment_matrix(spec, bump, lev)[1]
        b = spectral_moment_matrix(spec, bump, lev + 1)[1]
        assert abs(a - b) / b < 1e-4


@pytest.mark.parametrize("spec", [product_laplace(2), radial_exponential(2)])
def test_moment_matrix_structure(spec):
    mat, c1 = spectral_moment_matrix(spec, BumpFn(0.5, 2), level=7)
    assert abs(mat[0, 1]) < 1e-10 * mat[0, 0]
    np.testing.assert_allclose(mat, mat.T, atol=1e-10 * mat[0, 0])
    assert np.all(np.linalg.eigvalsh(mat) > 0)
    assert mat[0, 0] == pytest.approx(mat[1, 1], rel=1e-12)
    assert c1 == pytest.approx(np.linalg.det(mat), rel=1e-12)


def test_moment_matrix_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        spectral_moment_matrix(SPEC1, BumpFn(0.5, 2))


# ---------------------------------------------------------------- half-width


def test_halfwidth_unit_example():
    design = SimpleNamespace(d=1, n=1, a_n=1.0, h=1.0)
    phi = band_halfwidth(1.0, 2 * math.pi, design, 2.0, 0.0, _gc(1.0))
    assert phi == pytest.approx(1.0, abs=1e-15)


def test_halfwidth_scaling():
    gc = _gc(1.5, h=0.2)
    design = SimpleNamespace(d=1, n=100, a_n=0.5, h=0.2)
    base = band_halfwidth(1.0, 3.0, design, 2.0, 2.9, gc)
    assert band_halfwidth(2.5, 3.0, design, 2.0, 2.9, gc) == pytest.approx(2.5 * base, rel=1e-14)
    finer = SimpleNamespace(d=1, n=100, a_n=0.5, h=0.1)
    assert band_halfwidth(1.0, 3.0, finer, 2.0, 2.9, gc) > base
    bigger = SimpleNamespace(d=1, n=400, a_n=0.5, h=0.2)
    assert band_halfwidth(1.0, 3.0, bigger, 2.0, 2.9, gc) < base


def test_halfwidth_rejects_bad_inputs():
    design = SimpleNamespace(d=1, n=1, a_n=1.0, h=1.0)
    with pytest.raises(ValueError, match="sigma"):
        band_halfwidth(0.0, 1.0, design, 2.0, 1.0, _gc())
    with pytest.raises(DomainError, match="kappa"):
        band_halfwidth(1.0, 1.0, design, 2.0, -5.0, _gc())


def test_halfwidth_decreases_along_schedule():
    spec, bump = SPEC1, BUMP1
    prev = math.inf
    for n in (250, 1000, 4000, 16000):
        design = DesignSpec(1, n, n**-0.2, n**-0.15)
        setup = band_setup(spec, bump, design)
        phi = band_halfwidth(1.0, setup.k_l2norm, design, spec.beta, kappa_for_level(0.05),
                             setup.constants)
        assert phi < prev
        prev = phi


# ---------------------------------------------------------------- noise level


def test_sigma_of_constant_and_linear_data():
    design = DesignSpec(1, 50, 0.5, 0.3)
    assert estimate_sigma(Observations(design, np.full(design.shape, 3.0))) == 0.0
    lin = np.linspace(-1, 1, design.shape[0])
    assert estimate_sigma(Observations(design, lin)) == pytest.approx(0.0, abs=1e-13)


def test_sigma_recovers_noise_level():
    design = DesignSpec(1, 10_000, 0.5, 0.3)
    vals = []
    for seed in range(200):
        y = 0.7 * np.random.default_rng(seed).standard_normal(design.shape)
        vals.append(estimate_sigma(Observations(design, y)))
    assert abs(np.mean(vals) - 0.7) < 0.005


def test_second_order_differences_reduce_trend_bias():
    design = DesignSpec(1, 200, 0.5, 0.3)
    x = design.axis()
    y = 5 * np.sin(2 * math.pi * x) + 0.1 * np.random.default_rng(0).standard_normal(x.shape)
    obs = Observations(design, y)
    assert abs(estimate_sigma(obs, 2) - 0.1) < abs(estimate_sigma(obs, 1) - 0.1)
    with pytest.raises(ValueError, match="order"):
        estimate_sigma(obs, 3)


# ---------------------------------------------------------------- band assembly


@pytest.fixture(scope="module")
def band_case():
    design = DesignSpec(1, 300, 0.4, 0.25)
    y = np.random.default_rng(3).standard_normal(design.shape)
    est = estimate(Observations(design, y), kn_kernel(SPEC1, BUMP1, 0.25), 101)
    setup = band_setup(SPEC1, BUMP1, design)
    return design, est, setup


def test_band_matches_direct_formula(band_case):
    design, est, setup = band_case
    band = construct_band(est, 1.3, SPEC1, setup.constants, 0.05, setup.k_l2norm)
    gc = setup.constants
    kappa = -math.log(-0.5 * math.log(0.95))
    knorm = limit_kernel(SPEC1, BUMP1).l2_norm
    phi = ((kappa / gc.Cn3 + gc.Cn3) * 1.3 * knorm
           / (2 * math.pi * 0.25**2 * math.sqrt(0.25 * 300 * 0.4)))
    assert band.halfwidth == pytest.approx(phi, rel=1e-10)
    np.testing.assert_allclose(band.upper - band.lower, 2 * phi, rtol=1e-12)
    assert band.contains(est.values)
    js = band.to_json()
    assert js["halfwidth"] == band.halfwidth and len(js["lower"]) == 101


def test_bands_nest_in_alpha(band_case):
    _, est, setup = band_case
    b05 = construct_band(est, 1.0, SPEC1, setup.constants, 0.05, setup.k_l2norm)
    b10 = construct_band(est, 1.0, SPEC1, setup.constants, 0.10, setup.k_l2norm)
    assert np.all(b05.lower <= b10.lower) and np.all(b10.upper <= b05.upper)


def test_band_rejects_mismatched_metadata(band_case):
    design, est, setup = band_case
    other = gumbel_constants(setup.constants.C1, 1, 0.2)
    with pytest.raises(ValueError, match="do not match"):
        construct_band(est, 1.0, SPEC1, other, 0.05, setup.k_l2norm)
    with pytest.raises(ValueError, match="dimension"):
        construct_band(est, 1.0, product_laplace(2), setup.constants, 0.05, setup.k_l2norm)
    coarse = estimate(Observations(design, np.zeros(design.shape)), kn_kernel(SPEC1, BUMP1, 0.25), 5)
    with pytest.raises(ValueError, match="evaluation step"):
        construct_band(coarse, 1.0, SPEC1, setup.constants, 0.05, setup.k_l2norm)


def test_band_invariant_violations_detected(band_case):
    _, est, setup = band_case
    v = est.values
    with pytest.raises(ValueError, match="twice"):
        check_band_invariants(v, v - 1, v + 1.5, 1.0)
    with pytest.raises(ValueError, match="outside"):
        check_band_invariants(v, v + 1, v + 3, 1.0)
    with pytest.raises(ValueError, match="positive"):
        ConfidenceBand(est, 0.0, v, v, 0.05, 1.0, 1.0, setup.constants, 1.0)


def test_band_setup_norm_choice():
    lim = band_setup(SPEC1, BUMP1, DesignSpec(1, 1000, 0.5, 0.2), "limit").k_l2norm
    gaps = [band_setup(SPEC1, BUMP1, DesignSpec(1, 1000, 0.5, h), "finite").k_l2norm - lim
            for h in (0.2, 0.1, 0.05, 0.02)]
    assert all(g > 0 for g in gaps) and np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 0.01 * lim
    design = DesignSpec(1, 1000, 0.5, 0.2)
    with pytest.raises(ValueError, match="norm"):
        band_setup(SPEC1, BUMP1, design, "other")


def test_timedep_design_rejected_by_spatial_band():
    td = TimedepDesign(DesignSpec(1, 20, 0.5, 0.3), m=20, b_m=0.5, h_t=0.3)
    assert not isinstance(td, DesignSpec)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_kappa_monotone_property(a1, a2):
    if a1 < a2:
        assert kappa_for_level(a1) >= kappa_for_level(a2)


def test_band_collapses_with_tiny_sigma(band_case):
    design, _, setup = band_case
    g = np.cos(design.axis())
    est = estimate(Observations(design, g), kn_kernel(SPEC1, BUMP1, 0.25), 101)
    band = construct_band(est, 1e-12, SPEC1, setup.constants, 0.05, setup.k_l2norm)
    assert band.halfwidth < 1e-9
    np.testing.assert_allclose(band.lower, est.values, atol=1e-9)
    np.testing.assert_allclose(band.upper, est.values, atol=1e-9)
