from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import stats

from deconvband import sim
from deconvband.bands import gumbel_cdf
from deconvband.estimator import DesignSpec, estimate
from deconvband.kernel import kn_kernel
from deconvband.bump import BumpFn
from deconvband.psf import product_laplace
from deconvband.sim import (
    SchedulePoint,
    SimConfig,
    check_rate_conditions,
    clopper_pearson,
    coverage_experiment,
    draw_noise,
    generate,
    make_truth,
    noise_free_data,
    power_schedule,
    replicate_rng,
    supstat_experiment,
    sup_statistic,
    true_convolution,
    variance_experiment,
)
from oracles import gaussian_laplace_convolution

SPEC1 = product_laplace(1)
SMALL = (SchedulePoint(60, 0.5, 0.3),)


def _config(**kw):
    base = dict(truth="gaussian", schedule=SMALL, replicates=20, seed=11, eval_points=41)
    return SimConfig(**{**base, **kw})


# ---------------------------------------------------------------- truths and convolution


def test_zero_truth_convolves_to_zero():
    assert np.all(true_convolution(make_truth("zero"), SPEC1, np.linspace(-1, 1, 7)) == 0)


def test_laplace_autoconvolution():
    x = np.linspace(0.1, 3.0, 9)
    g = true_convolution(make_truth("laplace"), SPEC1, x)
    np.testing.assert_allclose(g, true_convolution(make_truth("laplace"), SPEC1, -x), rtol=1e-10)
    # closed form of the Laplace density convolved with itself
    np.testing.assert_allclose(g, (1 + x) * np.exp(-x) / 4, rtol=1e-9)
    assert np.all(np.diff(g) < 0)


def test_gaussian_matches_closed_form():
    x = np.linspace(-1, 1, 11)
    for c, s in ((0.5, 1.0), (0.0, 0.2)):
        g = true_convolution(make_truth("gaussian", center=c, scale=s), SPEC1, x)
        np.testing.assert_allclose(g, gaussian_laplace_convolution(x, c, s), rtol=1e-9)


def test_quadrature_self_convergence(monkeypatch):
    truth = make_truth("gaussian", center=0.0, scale=0.2)
    fine = sim.convolve_1d(truth, SPEC1, 0.0)
    monkeypatch.setattr(sim, "QUAD_EPSREL", 1e-6)
    monkeypatch.setattr(sim, "QUAD_EPSABS", 1e-10)
    coarse = sim.convolve_1d(truth, SPEC1, 0.0)
    assert abs(fine - coarse) < 1e-6 * abs(fine)


def test_separable_two_dimensional_convolution():
    spec2 = product_laplace(2)
    truth = make_truth("spline")
    pt = np.array([0.3, 0.6])
    g = true_convolution(truth, spec2, pt)
    g1 = true_convolution(truth, SPEC1, pt)
    assert g == pytest.approx(g1[0] * g1[1], rel=1e-12)


def test_unknown_truth_rejected():
    with pytest.raises(ValueError, match="unknown truth"):
        make_truth("sinc")


# ---------------------------------------------------------------- data generation


def test_zero_noise_gives_exact_convolution():
    cfg = _config(sigma=0.0)
    obs = generate(cfg, 0, 3)
    np.testing.assert_array_equal(obs.y, noise_free_data(cfg.make_truth(), SPEC1, obs.design))


def test_generation_is_reproducible():
    cfg = _config()
    a, b = generate(cfg, 0, 5), generate(cfg, 0, 5)
    assert a.y.tobytes() == b.y.tobytes()
    assert not np.array_equal(generate(cfg, 0, 6).y, a.y)


@pytest.mark.parametrize("noise,df", [("gaussian", None), ("student_t", 9.0), ("scaled_uniform", None)])
def test_noise_variance(noise, df):
    e = draw_noise(replicate_rng(1, 0, 0), 10**6, 0.7, noise, df)
    assert abs(np.var(e) / 0.49 - 1) < 0.01
    assert abs(np.mean(e)) < 0.005


def test_student_t_needs_enough_moments():
    with pytest.raises(ValueError, match="df >"):
        _config(noise="student_t", df=4.0)
    with pytest.raises(ValueError, match="df >"):
        _config(noise="student_t")
    _config(noise="student_t", df=5.0)


def test_config_json_round_trip():
    cfg = _config(truth_params={"scale": 0.5}, compare_alphas=(0.05, 0.2))
    back = SimConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back == cfg
    with pytest.raises(ValueError, match="unknown config keys"):
        SimConfig.from_json({**cfg.to_json(), "bogus": 1})


def test_config_validation():
    with pytest.raises(ValueError, match="alpha"):
        _config(alpha=1.0)
    with pytest.raises(ValueError, match="expand"):
        _config(schedule=(SchedulePoint(1, 0.5, 0.3),))
    with pytest.raises(ValueError, match="noise"):
        _config(noise="cauchy")


def test_power_schedule():
    pts = power_schedule([100, 1000])
    assert pts[1].a_n == pytest.approx(1000**-0.2)
    assert pts[0].h == pytest.approx(100**-0.15)


# ---------------------------------------------------------------- experiments


def test_coverage_is_one_for_tiny_noise():
    rep = coverage_experiment(_config(sigma=1e-9, sigma_mode="known", truth="zero"),
                              sigma_floor=1.0)
    assert rep.points[0].coverage == 1.0


def test_wider_band_covers_more_often():
    cfg = _config(alpha=0.5, compare_alphas=(0.05,), replicates=60)
    pc = coverage_experiment(cfg).points[0]
    assert pc.per_alpha["0.5"] <= pc.per_alpha["0.05"]
    assert pc.nested
    assert pc.ci_low <= pc.coverage <= pc.ci_high
    assert 0 <= pc.coverage <= 1


def test_clopper_pearson_edges():
    assert clopper_pearson(0, 10)[0] == 0.0
    assert clopper_pearson(10, 10)[1] == 1.0
    lo, hi = clopper_pearson(50, 100)
    assert lo < 0.5 < hi


def test_zero_noise_supstat():
    rep = supstat_experiment(_config(sigma=0.0, replicates=3))
    cn3 = rep.points[0].point["constants"]["Cn3"]
    assert rep.points[0].samples == [pytest.approx(-cn3**2)] * 3
    assert sup_statistic(np.zeros(5), 1.0, 0.0, 2.0) == -4.0


def test_limit_law_is_shifted_gumbel():
    ref = stats.gumbel_r(loc=math.log(2), scale=1)
    k = np.linspace(-2, 8, 21)
    np.testing.assert_allclose(gumbel_cdf(k), ref.cdf(k), rtol=1e-12)
    draws = ref.rvs(size=200_000, random_state=np.random.default_rng(0))
    se = math.pi / math.sqrt(6) / math.sqrt(draws.size)
    assert abs(draws.mean() - (math.log(2) + np.euler_gamma)) < 3 * se
    assert math.log(2) + np.euler_gamma == pytest.approx(1.27036, abs=1e-5)


def test_estimator_mean_matches_noise_free_estimate():
    cfg = _config(replicates=300)
    design = cfg.schedule[0].design(1)
    sk = kn_kernel(SPEC1, BumpFn(0.5, 1), design.h)
    ests = np.array([estimate(generate(cfg, 0, r), sk, 11, "fft").values for r in range(300)])
    from deconvband.estimator import Observations

    mean = estimate(Observations(design, noise_free_data(cfg.make_truth(), SPEC1, design)),
                    sk, 11, "fft").values
    se = ests.std(axis=0, ddof=1) / math.sqrt(300)
    assert np.all(np.abs(ests.mean(axis=0) - mean) < 4 * se)


def test_variance_experiment_exact_vs_monte_carlo():
    rep = variance_experiment(_config(replicates=2000, truth="zero"), points=(0.5,))
    # sampling sd of a variance estimate with 2000 draws is about 3 percent
    assert rep.mc_scaled[0] == pytest.approx(rep.exact_scaled[0], rel=0.12)
    assert rep.limit > 0


def test_results_independent_of_thread_count():
    cfg = _config(replicates=16)
    a = coverage_experiment(cfg, threads=1).to_json()
    b = coverage_experiment(cfg, threads=4).to_json()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    s1 = supstat_experiment(cfg, threads=1).points[0].samples
    s4 = supstat_experiment(cfg, threads=3).points[0].samples
    assert s1 == s4


def test_timedep_coverage_runs():
    sp = SchedulePoint(40, 0.5, 0.3, m=20, b_m=0.5, h_t=0.3)
    cfg = _config(schedule=(sp,), replicates=4, eval_points=21)
    pc = coverage_experiment(cfg).points[0]
    assert pc.point["m"] == 20 and "h_t" in pc.point["constants"]


# ---------------------------------------------------------------- rate conditions


def test_constant_bandwidth_flagged():
    rep = check_rate_conditions([SchedulePoint(n, n**-0.2, 0.3) for n in (10, 100, 1000)])
    assert rep.flags["expansion_term"]


def test_empty_schedule():
    rep = check_rate_conditions([])
    assert rep.rows == [] and rep.flags == {}


def test_power_schedule_rates():
    rep = check_rate_conditions(power_schedule([10**k for k in range(1, 7)]))
    side = [r["side_condition"] for r in rep.rows]
    # log n dominates at first, then the polynomial factor wins
    assert side[1] > side[0] and np.all(np.diff(side[1:]) < 0)
    # a_n^(nu + d/2) with a_n = n^-0.2 against sqrt(h n a_n): exponent 0.325 - 0.3 > 0
    assert rep.flags["band_remainder"]
    exp_term = [r["expansion_term"] for r in rep.rows]
    assert exp_term[0] < exp_term[1] and np.all(np.diff(exp_term[2:]) < 0)
    assert rep.flags["expansion_term"]
    tail = check_rate_conditions(power_schedule([10**k for k in range(3, 8)]))
    assert not tail.flags["expansion_term"] and not tail.flags["side_condition"]
    assert tail.flags["band_remainder"]
