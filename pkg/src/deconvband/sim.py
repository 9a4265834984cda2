"""Monte Carlo harness: synthetic data, coverage, sup-statistic and variance studies."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .bands import (
    NORMS,
    band_halfwidth,
    band_setup,
    estimate_sigma,
    gumbel_cdf,
    kappa_for_level,
)
from .bump import BumpFn
from .errors import NumericalError
from .estimator import DesignSpec, EstimatorPlan, Observations, default_eval_axes
from .kernel import kn_kernel
from .psf import PsfSpec, get_psf
from .timedep import (
    DN3_EXPONENTS,
    NORMALIZATIONS,
    TimedepDesign,
    timedep_halfwidth,
    timedep_kernel,
    timedep_setup,
)

NOISES = ("gaussian", "student_t", "scaled_uniform")
SIGMA_MODES = ("estimate", "known")
THREADS_ENV = "DECONVBAND_THREADS"

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-14


# ---------------------------------------------------------------- truths

@dataclass(frozen=True)
class Truth:
    """Tensor product ``prod_j f1(x_j)`` of a 1-d profile with center and scale.

    For space-time designs the same profile (unconvolved) multiplies along t.
    """

    name: str
    center: float = 0.5
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.name not in TRUTHS:
            raise ValueError(f"unknown truth {self.name!r}; choose from {sorted(TRUTHS)}")
        if not self.scale > 0:
            raise ValueError(f"truth scale must be positive, got {self.scale}")

    def profile(self, x) -> np.ndarray:
        return TRUTHS[self.name][0]((np.asarray(x, dtype=float) - self.center) / self.scale)

    def __call__(self, x) -> np.ndarray:
        """Values at points of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        return np.prod(self.profile(x), axis=-1)

    def on_axes(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        out = np.ones(())
        for a in axes:
            out = np.multiply.outer(out, self.profile(a))
        return out

    def pieces(self, x: float) -> list[tuple[float, float]]:
        """Integration intervals for ``int f1(s) psi1(x - s) ds``, split at kinks."""
        lo, hi = TRUTHS[self.name][1]
        lo = -math.inf if lo is None else self.center + lo * self.scale
        hi = math.inf if hi is None else self.center + hi * self.scale
        cuts = sorted({c for c in (x, self.center) if lo < c < hi})
        edges = [lo, *cuts, hi]
        return list(zip(edges[:-1], edges[1:]))


def _zero(u):
    return np.zeros_like(u)


def _gaussian(u):
    return np.exp(-0.5 * u**2)


def _spline(u):
    return np.where(np.abs(u) < 1.0, (1.0 - np.minimum(u**2, 1.0)) ** 3, 0.0)


def _laplace(u):
    return 0.5 * np.exp(-np.abs(u))


# profile and its effective support in scaled units (None = unbounded);
# the Gaussian is cut at 12 standard deviations, where it is below 1e-31
TRUTHS: dict[str, tuple[Callable, tuple[float | None, float | None]]] = {
    "zero": (_zero, (0.0, 0.0)),
    "gaussian": (_gaussian, (-12.0, 12.0)),
    "spline": (_spline, (-1.0, 1.0)),
    "laplace": (_laplace, (None, None)),
}

TRUTH_DEFAULTS = {
    "zero": {},
    "gaussian": {"center": 0.5, "scale": 1.0},
    "spline": {"center": 0.5, "scale": 2.0},
    "laplace": {"center": 0.0, "scale": 1.0},
}


def make_truth(name: str, **params) -> Truth:
    return Truth(name, **{**TRUTH_DEFAULTS.get(name, {}), **params})


# ---------------------------------------------------------------- convolution

def _scalar_density_1d(spec: PsfSpec) -> Callable[[float], float]:
    one = spec if spec.dim == 1 else get_psf(spec.kind, 1)
    if one.density is None:
        raise ValueError(f"PSF {spec.kind} carries no density; cannot simulate data")
    dens = one.density
    return lambda u: float(dens(np.array([u])))


def _quad(fn, a: float, b: float) -> float:
    val, err, info, *msg = integrate.quad(
        fn, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400, full_output=1
    )
    if msg:
        raise NumericalError(f"adaptive quadrature failed on [{a}, {b}]: {msg[0]}",
                             value=val, error=err)
    return val


def convolve_1d(truth: Truth, spec: PsfSpec, x: float,
                density: Callable[[float], float] | None = None) -> float:
    """``int f1(s) psi1(x - s) ds`` by adaptive quadrature."""
    if truth.name == "zero":
        return 0.0
    psi = density or _scalar_density_1d(spec)
    f1 = TRUTHS[truth.name][0]
    c, s = truth.center, truth.scale
    integrand = lambda t: float(f1((t - c) / s)) * psi(x - t)  # noqa: E731
    return math.fsum(_quad(integrand, a, b) for a, b in truth.pieces(float(x)))


@lru_cache(maxsize=64)
def _convolved_axis(truth: Truth, spec: PsfSpec, points: tuple[float, ...]) -> np.ndarray:
    psi = _scalar_density_1d(spec)
    out = np.empty(len(points))
    for i, x in enumerate(points):
        out[i] = convolve_1d(truth, spec, x, psi)
    return out


def true_convolution(truth: Truth, spec: PsfSpec, x) -> np.ndarray | float:
    """``g(x) = int f(s) psi(x - s) ds`` at points of shape ``(..., d)``.

    Separable PSFs reduce to products of 1-d integrals; other PSFs use nested
    adaptive quadrature in d dimensions (slow, meant for spot checks).
    """
    x = np.asarray(x, dtype=float)
    d = spec.dim
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ValueError(f"points need trailing length {d}, got shape {x.shape}")
    pts = x.reshape(-1, d)
    if spec.separable:
        psi = _scalar_density_1d(spec)
        vals = np.array([math.prod(convolve_1d(truth, spec, xi, psi) for xi in p) for p in pts])
    else:
        vals = np.array([_convolve_nd(truth, spec, p) for p in pts])
    out = vals.reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


def _convolve_nd(truth: Truth, spec: PsfSpec, x: np.ndarray) -> float:
    if truth.name == "zero":
        return 0.0
    lo, hi = TRUTHS[truth.name][1]
    lo = -np.inf if lo is None else truth.center + lo * truth.scale
    hi = np.inf if hi is None else truth.center + hi * truth.scale

    def integrand(*s):
        s = np.asarray(s)
        return float(truth(s) * spec.density(x - s))

    val, err = integrate.nquad(integrand, [(lo, hi)] * spec.dim,
                               opts={"epsrel": 1e-8, "epsabs": 1e-12, "limit": 200})
    return val


def noise_free_data(truth: Truth, spec: PsfSpec, design) -> np.ndarray:
    """``g(x_k)`` (times ``f1(t_j)`` on space-time designs) on the full grid."""
    spatial = design.spatial if isinstance(design, TimedepDesign) else design
    if not spec.separable:
        ax = spatial.axis()
        mesh = np.stack(np.meshgrid(*([ax] * spatial.d), indexing="ij"), axis=-1)
        g = np.asarray(true_convolution(truth, spec, mesh))
    else:
        g1 = _convolved_axis(truth, spec, tuple(spatial.axis().tolist()))
        g = np.ones(())
        for _ in range(spatial.d):
            g = np.multiply.outer(g, g1)
    if isinstance(design, TimedepDesign):
        g = np.multiply.outer(g, truth.profile(design.time_axis()))
    return g


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class SchedulePoint:
    n: int
    a_n: float
    h: float
    m: int | None = None
    b_m: float | None = None
    h_t: float | None = None

    @property
    def timedep(self) -> bool:
        return self.m is not None

    def design(self, d: int):
        spatial = DesignSpec(d, self.n, self.a_n, self.h)
        if not self.timedep:
            return spatial
        if self.b_m is None or self.h_t is None:
            raise ValueError("time-dependent schedule points need m, b_m and h_t together")
        return TimedepDesign(spatial, self.m, self.b_m, self.h_t)

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def power_schedule(ns: Sequence[int], a_exp: float = -0.2, h_exp: float = -0.15) -> tuple:
    """Points ``(n, n^a_exp, n^h_exp)``."""
    return tuple(SchedulePoint(int(n), float(n) ** a_exp, float(n) ** h_exp) for n in ns)


@dataclass(frozen=True)
class SimConfig:
    truth: str = "gaussian"
    truth_params: dict = field(default_factory=dict, hash=False)
    psf: str = "product-laplace"
    dim: int = 1
    bump_D: float = 0.5
    schedule: tuple[SchedulePoint, ...] = ()
    sigma: float = 1.0
    noise: str = "gaussian"
    df: float | None = None
    replicates: int = 100
    seed: int = 0
    alpha: float = 0.10
    compare_alphas: tuple[float, ...] = (0.05,)
    eval_points: int = 101
    sigma_mode: str = "estimate"
    sigma_order: int = 2
    norm: str = "limit"
    delta: float = 0.5
    dn3_exponent: str = "d-1"
    normalization: str = "printed"
    level: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "schedule", tuple(
            p if isinstance(p, SchedulePoint) else SchedulePoint(**p) for p in self.schedule
        ))
        object.__setattr__(self, "compare_alphas", tuple(float(a) for a in self.compare_alphas))
        self.make_truth()
        get_psf(self.psf, self.dim)
        if self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be positive, got {self.replicates}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for a in (self.alpha, *self.compare_alphas):
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha must lie in (0, 1), got {a}")
        if not 0.0 < self.delta < self.dim:
            raise ValueError(f"delta must lie in (0, d), got {self.delta}")
        if self.noise not in NOISES:
            raise ValueError(f"noise must be one of {NOISES}, got {self.noise!r}")
        if self.noise == "student_t":
            need = max(4.0, 2 * self.dim / (self.dim - self.delta))
            if self.df is None or not self.df > need:
                raise ValueError(
                    f"student_t noise needs df > {need:g} (finite fourth and r-th moments), "
                    f"got df={self.df}"
                )
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if self.dn3_exponent not in DN3_EXPONENTS:
            raise ValueError(f"dn3_exponent must be one of {DN3_EXPONENTS}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.eval_points < 2:
            raise ValueError("need at least 2 evaluation points per axis")
        for p in self.schedule:
            p.design(self.dim)

    def make_truth(self) -> Truth:
        return make_truth(self.truth, **self.truth_params)

    @property
    def spec(self) -> PsfSpec:
        return get_psf(self.psf, self.dim)

    def bump(self, dim: int | None = None) -> BumpFn:
        return BumpFn(self.bump_D, self.dim if dim is None else dim)

    def to_json(self) -> dict:
        out = asdict(self)
        out["schedule"] = [p.to_json() for p in self.schedule]
        out["compare_alphas"] = list(self.compare_alphas)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SimConfig":
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        data["schedule"] = tuple(SchedulePoint(**p) for p in data.get("schedule", ()))
        data["compare_alphas"] = tuple(data.get("compare_alphas", (0.05,)))
        return cls(**data)


# ---------------------------------------------------------------- data

def replicate_rng(seed: int, point: int, rep: int) -> np.random.Generator:
    """Independent counter-based stream for one (schedule point, replicate)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(point, rep))))


def draw_noise(rng: np.random.Generator, shape, sigma: float, noise: str,
               df: float | None = None) -> np.ndarray:
    """Centered noise with standard deviation ``sigma``."""
    if noise == "gaussian":
        e = rng.standard_normal(shape)
    elif noise == "student_t":
        e = rng.standard_t(df, shape) / math.sqrt(df / (df - 2.0))
    elif noise == "scaled_uniform":
        e = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), shape)
    else:
        raise ValueError(f"unknown noise {noise!r}")
    return sigma * e


def generate(config: SimConfig, point: int, rep: int) -> Observations:
    """Observations ``Y_k = g(x_k) + eps_k`` for one replicate."""
    design = config.schedule[point].design(config.dim)
    g = noise_free_data(config.make_truth(), config.spec, design)
    rng = replicate_rng(config.seed, point, rep)
    return Observations(design, g + draw_noise(rng, g.shape, config.sigma, config.noise, config.df))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    return threads


def map_replicates(fn: Callable[[int], object], count: int, threads: int | None = None) -> list:
    """``[fn(0), ..., fn(count-1)]``; order is fixed whatever the thread count."""
    threads = resolve_threads(threads)
    if threads == 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


# ---------------------------------------------------------------- per-point context

@dataclass
class _PointContext:
    design: object
    axes: list
    plan: EstimatorPlan
    g: np.ndarray
    truth_vals: np.ndarray
    mean_est: np.ndarray
    constants: object
    k_l2norm: float
    halfwidth: Callable[[float, float], float]
    scale: float  # standardizes f_hat - E f_hat to the sup statistic's scale (without sigma)


def _context(config: SimConfig, point: int) -> _PointContext:
    sp = config.schedule[point]
    design = sp.design(config.dim)
    spec = config.spec
    truth = config.make_truth()
    d = config.dim
    if sp.timedep:
        bump = config.bump(d + 1)
        setup = timedep_setup(spec, bump, design, config.dn3_exponent, config.level)
        sk = timedep_kernel(spec, bump, design.h, design.h_t, config.level)
        axes = default_eval_axes(d + 1, config.eval_points)
        power = d + 1 if config.normalization == "printed" else d + 0.5
        root = math.sqrt((design.h * design.n * design.a_n) ** d
                         * design.m * design.b_m * design.h_t)
        scale = (2 * math.pi) ** power * design.h**spec.beta * root / setup.k_l2norm
        gc, knorm = setup.constants, setup.k_l2norm

        def halfwidth(sigma, kappa):
            return timedep_halfwidth(sigma, knorm, design, spec.beta, kappa, gc,
                                     config.normalization)
    else:
        bump = config.bump()
        setup = band_setup(spec, bump, design, config.norm, config.level)
        sk = kn_kernel(spec, bump, design.h, config.level)
        axes = default_eval_axes(d, config.eval_points)
        scale = ((2 * math.pi) ** d * design.h**spec.beta
                 * math.sqrt((design.h * design.n * design.a_n) ** d) / setup.k_l2norm)
        gc, knorm = setup.constants, setup.k_l2norm

        def halfwidth(sigma, kappa):
            return band_halfwidth(sigma, knorm, design, spec.beta, kappa, gc)

    plan = EstimatorPlan(sk, design.geometry, axes)
    g = noise_free_data(truth, spec, design)
    return _PointContext(
        design=design, axes=axes, plan=plan, g=g, truth_vals=truth.on_axes(axes),
        mean_est=plan(g), constants=gc, k_l2norm=knorm, halfwidth=halfwidth, scale=scale,
    )


def _noise(config: SimConfig, point: int, rep: int, shape) -> np.ndarray:
    return draw_noise(replicate_rng(config.seed, point, rep), shape, config.sigma,
                      config.noise, config.df)


def _point_json(sp: SchedulePoint, ctx: _PointContext) -> dict:
    return {**sp.to_json(), "constants": ctx.constants.to_json(), "k_l2norm": ctx.k_l2norm}


# ---------------------------------------------------------------- coverage

@dataclass
class PointCoverage:
    point: dict
    replicates: int
    coverage: float
    ci_low: float
    ci_high: float
    mean_halfwidth: float
    mean_sup_error: float
    per_alpha: dict
    nested: bool

    def __post_init__(self) -> None:
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage {self.coverage} outside [0, 1]")


@dataclass
class CoverageReport:
    config: SimConfig
    points: list[PointCoverage]

    def to_json(self) -> dict:
        return {"config": self.config.to_json(), "points": [asdict(p) for p in self.points]}

    def to_csv(self) -> str:
        alphas = sorted({a for p in self.points for a in p.per_alpha}, key=float)
        keys = ["n", "a_n", "h", "m", "b_m", "h_t"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys + ["replicates", "coverage", "ci_low", "ci_high", "mean_halfwidth",
                           "mean_sup_error", "nested"] + [f"coverage_alpha_{a}" for a in alphas])
        for p in self.points:
            w.writerow([repr(p.point[k]) if k in p.point else "" for k in keys]
                       + [p.replicates, repr(p.coverage), repr(p.ci_low), repr(p.ci_high),
                          repr(p.mean_halfwidth), repr(p.mean_sup_error), int(p.nested)]
                       + [repr(p.per_alpha[a]) if a in p.per_alpha else "" for a in alphas])
        return buf.getvalue()


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(a / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - a / 2, successes + 1,
                                                                trials - successes))
    return lo, hi


def coverage_experiment(config: SimConfig, threads: int | None = None,
                        sigma_floor: float = 0.0) -> CoverageReport:
    """Fraction of replicates whose band contains f at every evaluation point.

    ``sigma_floor`` bounds the plugged-in noise level from below (a zero
    estimate would give a degenerate band).
    """
    alphas = sorted({config.alpha, *config.compare_alphas})
    kappas = {a: kappa_for_level(a) for a in alphas}
    points = []
    for i, sp in enumerate(config.schedule):
        ctx = _context(config, i)
        shape = ctx.g.shape

        def one(rep, ctx=ctx, i=i, shape=shape):
            y = ctx.g + _noise(config, i, rep, shape)
            if config.sigma_mode == "known":
                sigma = config.sigma
            else:
                sigma = estimate_sigma(Observations(ctx.design, y), config.sigma_order)
            sigma = max(sigma, sigma_floor)
            est = ctx.plan(y)
            err = float(np.max(np.abs(est - ctx.truth_vals)))
            phis = {a: ctx.halfwidth(sigma, kappas[a]) for a in alphas}
            covered = {a: err <= phis[a] for a in alphas}
            # constant half-widths: strict containment is a strict inequality of widths
            nested = all(phis[a] > phis[b] for a, b in zip(alphas, alphas[1:]))
            return covered, phis[config.alpha], err, nested

        results = map_replicates(one, config.replicates, threads)
        reps = len(results)
        hits = sum(r[0][config.alpha] for r in results)
        lo, hi = clopper_pearson(hits, reps)
        points.append(PointCoverage(
            point=_point_json(sp, ctx),
            replicates=reps,
            coverage=hits / reps,
            ci_low=lo,
            ci_high=hi,
            mean_halfwidth=math.fsum(r[1] for r in results) / reps,
            mean_sup_error=math.fsum(r[2] for r in results) / reps,
            per_alpha={repr(a): sum(r[0][a] for r in results) / reps for a in alphas},
            nested=all(r[3] for r in results),
        ))
    return CoverageReport(config, points)


# ---------------------------------------------------------------- sup statistic

@dataclass
class PointSupstat:
    point: dict
    samples: list[float]
    ks_distance: float
    ks_pvalue: float
    mean: float


@dataclass
class SupstatReport:
    config: SimConfig
    points: list[PointSupstat]

    @property
    def ks_distances(self) -> list[float]:
        return [p.ks_distance for p in self.points]

    def to_json(self) -> dict:
        return {"config": self.config.to_json(), "points": [asdict(p) for p in self.points]}

    def to_csv(self) -> str:
        keys = ["n", "a_n", "h", "m", "b_m", "h_t"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys + ["replicates", "ks_distance", "ks_pvalue", "mean"])
        for p in self.points:
            w.writerow([repr(p.point[k]) if k in p.point else "" for k in keys]
                       + [len(p.samples), repr(p.ks_distance), repr(p.ks_pvalue), repr(p.mean)])
        return buf.getvalue()


def sup_statistic(centered: np.ndarray, scale: float, sigma: float, cn3: float) -> float:
    """``(sup |Y| - Cn3) * Cn3`` for the standardized field ``Y = scale * centered / sigma``."""
    sup = float(np.max(np.abs(centered))) * scale / sigma if sigma > 0 else 0.0
    return (sup - cn3) * cn3


def supstat_experiment(config: SimConfig, threads: int | None = None) -> SupstatReport:
    """Samples of the normalized supremum, centered exactly by a noise-free pass."""
    points = []
    for i, sp in enumerate(config.schedule):
        ctx = _context(config, i)
        shape = ctx.g.shape
        cn3 = ctx.constants.Cn3

        def one(rep, ctx=ctx, i=i, shape=shape):
            centered = ctx.plan(ctx.g + _noise(config, i, rep, shape)) - ctx.mean_est
            return sup_statistic(centered, ctx.scale, config.sigma, cn3)

        samples = map_replicates(one, config.replicates, threads)
        ks = stats.kstest(samples, gumbel_cdf)
        points.append(PointSupstat(
            point=_point_json(sp, ctx),
            samples=[float(s) for s in samples],
            ks_distance=float(ks.statistic),
            ks_pvalue=float(ks.pvalue),
            mean=math.fsum(samples) / len(samples),
        ))
    return SupstatReport(config, points)


# ---------------------------------------------------------------- variance

@dataclass
class VarianceReport:
    point: dict
    x: list[float]
    mc_scaled: list[float]
    exact_scaled: list[float]
    limit: float
    replicates: int

    @property
    def mc_ratio(self) -> list[float]:
        return [v / self.limit for v in self.mc_scaled]

    @property
    def exact_ratio(self) -> list[float]:
        return [v / self.limit for v in self.exact_scaled]

    def to_json(self) -> dict:
        return {**asdict(self), "mc_ratio": self.mc_ratio, "exact_ratio": self.exact_ratio}


def estimator_weights(sk, design: DesignSpec, x: np.ndarray) -> np.ndarray:
    """Row ``w`` with ``f_hat(x) = w . y.ravel()`` (direct kernel evaluation)."""
    geom = design.geometry
    mesh = np.stack(np.meshgrid(*geom.data_axes(), indexing="ij"), axis=-1)
    return geom.prefactor * sk((x - mesh) / design.h).reshape(-1)


def variance_experiment(config: SimConfig, points: Sequence[float] = (0.25, 0.5, 0.75),
                        point: int = -1, threads: int | None = None) -> VarianceReport:
    """Scaled variance ``n^d a_n^d h^d h^(2 beta) Var f_hat(x)`` against its limit.

    Interior points are taken on the diagonal ``(p, ..., p)``. Reports the Monte
    Carlo value, the exact finite-n value ``sigma^2 sum_k w_k^2`` and the limit
    ``sigma^2 ||K||^2 / (2 pi)^(2d)``.
    """
    idx = range(len(config.schedule))[point]
    sp = config.schedule[idx]
    if sp.timedep:
        raise ValueError("variance experiment covers spatial designs only")
    design = sp.design(config.dim)
    spec, bump, d = config.spec, config.bump(), config.dim
    sk = kn_kernel(spec, bump, design.h, config.level)
    w = np.stack([estimator_weights(sk, design, np.full(d, p)) for p in points])
    shape = design.shape

    def one(rep):
        return w @ _noise(config, idx, rep, shape).reshape(-1)

    vals = np.asarray(map_replicates(one, config.replicates, threads))
    factor = (design.n * design.a_n * design.h) ** d * design.h ** (2 * spec.beta)
    mc = np.var(vals, axis=0, ddof=1) * factor
    exact = config.sigma**2 * np.sum(w**2, axis=1) * factor
    knorm = band_setup(spec, bump, design, "limit", config.level).k_l2norm
    limit = config.sigma**2 * knorm**2 / (2 * math.pi) ** (2 * d)
    return VarianceReport(
        point=sp.to_json(), x=[float(p) for p in points], mc_scaled=mc.tolist(),
        exact_scaled=exact.tolist(), limit=limit, replicates=config.replicates,
    )


# ---------------------------------------------------------------- rate conditions

@dataclass
class RateReport:
    rows: list[dict]
    flags: dict

    def to_json(self) -> dict:
        return {"rows": self.rows, "flags": self.flags}


RATE_EXPRESSIONS = ("side_condition", "band_remainder", "expansion_term")


def check_rate_conditions(schedule: Sequence[SchedulePoint], d: int = 1, beta: float = 2.0,
                          mu1: float = 2.0, delta: float = 0.5, nu: float = 1.0,
                          gamma: float = 2.5) -> RateReport:
    """Evaluate the o(1) bandwidth expressions along a schedule.

    ``side_condition``   log n / (n^delta a_n^delta h^d)
    ``band_remainder``   sqrt((h n a_n)^d log n) (1/(n^3 a_n^3 h^2) + a_n^nu/n
                         + a_n^(nu + d/2) + h^(gamma + beta))
    ``expansion_term``   h^mu1 (log n)^2

    A flag is True when the sequence fails to decrease strictly along the schedule.
    """
    rows = []
    for p in schedule:
        n, a, h = p.n, p.a_n, p.h
        ln = math.log(n)
        rows.append({
            "n": n, "a_n": a, "h": h,
            "side_condition": ln / (n**delta * a**delta * h**d),
            "band_remainder": math.sqrt((h * n * a) ** d * ln) * (
                1 / (n**3 * a**3 * h**2) + a**nu / n + a ** (nu + d / 2) + h ** (gamma + beta)
            ),
            "expansion_term": h**mu1 * ln**2,
        })
    flags = {
        k: any(r2[k] >= r1[k] for r1, r2 in zip(rows, rows[1:])) for k in RATE_EXPRESSIONS
    } if rows else {}
    return RateReport(rows, flags)


def with_replicates(config: SimConfig, replicates: int) -> SimConfig:
    return replace(config, replicates=replicates)
