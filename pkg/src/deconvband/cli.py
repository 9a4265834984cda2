"""Command-line front end: ``deconvband <subcommand> ...``.

Exit codes: 0 success, 2 usage or validation error, 3 file error,
4 numerical failure. Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

from . import io as dio
from .bands import NORMS, band_setup, construct_band, estimate_sigma
from .bump import BumpFn
from .errors import NumericalError
from .estimator import METHODS, DesignSpec, Observations, estimate
from .kernel import compute_Kn, compute_limit_kernel, kn_kernel
from .psf import get_psf
from .sim import (
    SimConfig,
    check_rate_conditions,
    coverage_experiment,
    resolve_threads,
    supstat_experiment,
)
from .timedep import (
    DN3_EXPONENTS,
    NORMALIZATIONS,
    TimedepDesign,
    compute_Kn_timedep,
    construct_band_timedep,
    estimate_timedep,
    timedep_kernel,
    timedep_setup,
)

EXIT_OK, EXIT_USAGE, EXIT_FILE, EXIT_NUMERICAL = 0, 2, 3, 4
PSF_CHOICES = ("product-laplace", "radial-exp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _open_unit(name: str):
    def parse(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not 0.0 < v < 1.0:
            raise argparse.ArgumentTypeError(f"{name} must lie in the open interval (0, 1), got {v}")
        return v
    return parse


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--psf", choices=PSF_CHOICES, default="product-laplace")
    p.add_argument("--dim", type=_positive_int, default=1, help="spatial dimension d")
    p.add_argument("--bump-D", type=_open_unit("bump-D"), default=0.5,
                   help="flat-top half-width of the spectral bump")
    p.add_argument("--level", type=int, default=None,
                   help="spectral quadrature level (2**level nodes per axis)")
    p.add_argument("--out", required=True, help="output JSON path")


def _timedep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timedep", action="store_true", help="space-time model (CSV has column j)")
    p.add_argument("--m", type=_positive_int, help="time half-count m")
    p.add_argument("--bm", type=_open_unit("bm"), help="time design scale b_m")
    p.add_argument("--ht", type=_open_unit("ht"), help="time bandwidth h_t")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="observations CSV (k1..kd[,j],y)")
    p.add_argument("--a-n", "--an", dest="a_n", type=_open_unit("a-n"), required=True,
                   help="design scale a_n")
    p.add_argument("--h", type=_open_unit("h"), required=True, help="spatial bandwidth")
    p.add_argument("--eval-points", type=_positive_int, default=101,
                   help="evaluation points per axis on [0, 1]")
    p.add_argument("--method", choices=METHODS, default="fft")
    _timedep_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deconvband", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kernel", help="tabulate a deconvolution kernel")
    _common(p)
    p.add_argument("--h", type=_open_unit("h"), help="bandwidth (required unless --kind limit)")
    p.add_argument("--kind", choices=("Kn", "limit", "timedep"), default="Kn")
    p.add_argument("--ht", type=_open_unit("ht"), help="time bandwidth for --kind timedep")
    p.add_argument("--extent", "--grid-extent", dest="extent", type=_positive_float, default=10.0)
    p.add_argument("--points", "--grid-points", dest="points", type=_positive_int, default=201)

    p = sub.add_parser("estimate", help="evaluate the estimator on a grid in [0, 1]^d")
    _common(p)
    _data_flags(p)

    p = sub.add_parser("band", help="uniform confidence band")
    _common(p)
    _data_flags(p)
    p.add_argument("--alpha", type=_open_unit("alpha"), default=0.05)
    p.add_argument("--sigma", type=_positive_float, help="noise level (default: estimated)")
    p.add_argument("--sigma-order", type=int, choices=(1, 2), default=2)
    p.add_argument("--norm", choices=NORMS, default="limit",
                   help="kernel norm in the half-width: limit kernel or h^beta K_n")
    p.add_argument("--dn3-exponent", choices=DN3_EXPONENTS, default="d-1")
    p.add_argument("--normalization", choices=NORMALIZATIONS, default="printed",
                   help="space-time half-width normalization")

    for name, text in (("coverage", "coverage Monte Carlo"), ("supstat", "sup-statistic Monte Carlo")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="simulation config JSON")
        p.add_argument("--out", required=True, help="report JSON path")
        p.add_argument("--csv", help="flat CSV path (default: report path with .csv)")
        p.add_argument("--threads", type=_positive_int, help="worker threads (or DECONVBAND_THREADS)")

    p = sub.add_parser("check-rates", help="evaluate bandwidth rate conditions along a schedule")
    p.add_argument("--config", required=True, help="simulation config JSON (schedule is used)")
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=None, help="default: the config's delta")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=2.5)
    return parser


# ---------------------------------------------------------------- commands

def _design(args, y_shape, timedep: bool):
    d = len(y_shape) - (1 if timedep else 0)
    if d != args.dim:
        raise ValueError(f"data has spatial dimension {d} but --dim is {args.dim}")
    if timedep != bool(args.timedep):
        raise ValueError("data has a time column j" if timedep else "--timedep needs a j column")
    n = (y_shape[0] - 1) // 2
    if any((s - 1) // 2 != n for s in y_shape[:d]):
        raise ValueError(f"spatial grid must be a cube, got shape {y_shape[:d]}")
    spatial = DesignSpec(d, n, args.a_n, args.h)
    if not timedep:
        return spatial
    if args.bm is None or args.ht is None:
        raise ValueError("--timedep needs --bm and --ht")
    m = (y_shape[-1] - 1) // 2
    if args.m is not None and args.m != m:
        raise ValueError(f"--m {args.m} does not match the data (m={m})")
    return TimedepDesign(spatial, m, args.bm, args.ht)


def _estimate(args):
    y, timedep = dio.read_observations(args.data)
    design = _design(args, y.shape, timedep)
    obs = Observations(design, y)
    spec = get_psf(args.psf, args.dim)
    if timedep:
        sk = timedep_kernel(spec, BumpFn(args.bump_D, args.dim + 1), design.h, design.h_t,
                            args.level)
        est = estimate_timedep(obs, sk, args.eval_points, args.method)
    else:
        sk = kn_kernel(spec, BumpFn(args.bump_D, args.dim), design.h, args.level)
        est = estimate(obs, sk, args.eval_points, args.method)
    return obs, spec, est


def cmd_kernel(args) -> dict:
    spec = get_psf(args.psf, args.dim)
    if args.kind == "limit":
        table = compute_limit_kernel(spec, BumpFn(args.bump_D, args.dim), args.extent,
                                     args.points, args.level)
    elif args.h is None:
        raise ValueError("--h is required for --kind Kn and timedep")
    elif args.kind == "Kn":
        table = compute_Kn(spec, BumpFn(args.bump_D, args.dim), args.h, args.extent,
                           args.points, args.level)
    else:
        if args.ht is None:
            raise ValueError("--ht is required for --kind timedep")
        table = compute_Kn_timedep(spec, BumpFn(args.bump_D, args.dim + 1), args.h, args.ht,
                                   args.extent, args.points, args.level)
    return table.to_json()


def cmd_estimate(args) -> dict:
    return _estimate(args)[2].to_json()


def cmd_band(args) -> dict:
    obs, spec, est = _estimate(args)
    sigma = args.sigma if args.sigma is not None else estimate_sigma(obs, args.sigma_order)
    design = obs.design
    if isinstance(design, TimedepDesign):
        bump = BumpFn(args.bump_D, args.dim + 1)
        setup = timedep_setup(spec, bump, design, args.dn3_exponent, args.level)
        band = construct_band_timedep(est, sigma, spec, setup.constants, args.alpha,
                                      setup.k_l2norm, args.normalization)
    else:
        setup = band_setup(spec, BumpFn(args.bump_D, args.dim), design, args.norm, args.level)
        band = construct_band(est, sigma, spec, setup.constants, args.alpha, setup.k_l2norm,
                              {"norm": args.norm})
    out = band.to_json()
    out["sigma_source"] = "given" if args.sigma is not None else f"difference-order-{args.sigma_order}"
    return out


def _load_config(path) -> SimConfig:
    return SimConfig.from_json(dio.read_json(path))


def _experiment(args, run) -> dict:
    config = _load_config(args.config)
    report = run(config, threads=resolve_threads(args.threads))
    csv_path = Path(args.csv) if args.csv else Path(args.out).with_suffix(".csv")
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    args._extra_outputs = [csv_path]
    return report.to_json()


def cmd_coverage(args) -> dict:
    return _experiment(args, coverage_experiment)


def cmd_supstat(args) -> dict:
    return _experiment(args, supstat_experiment)


def cmd_check_rates(args) -> dict:
    config = _load_config(args.config)
    spec = config.spec
    mu1 = spec.expansion[0].mu if spec.expansion else 2.0
    delta = config.delta if args.delta is None else args.delta
    report = check_rate_conditions(config.schedule, config.dim, spec.beta, mu1, delta,
                                   args.nu, args.gamma)
    return {**report.to_json(), "parameters": {"delta": delta, "nu": args.nu,
                                               "gamma": args.gamma, "beta": spec.beta,
                                               "mu1": mu1, "d": config.dim}}


COMMANDS = {
    "kernel": cmd_kernel,
    "estimate": cmd_estimate,
    "band": cmd_band,
    "coverage": cmd_coverage,
    "supstat": cmd_supstat,
    "check-rates": cmd_check_rates,
}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    args._extra_outputs = []
    try:
        result = COMMANDS[args.command](args)
        out = Path(args.out)
        dio.write_json(out, result)
        config = {k: v for k, v in vars(args).items() if not k.startswith("_")}
        inputs = [p for p in (getattr(args, "data", None), getattr(args, "config", None)) if p]
        seed = result.get("config", {}).get("seed") if isinstance(result, dict) else None
        dio.write_manifest(out, args.command, config, inputs, [out, *args._extra_outputs],
                           seed=seed, started=started)
    except (dio.FileFormatError, OSError) as exc:
        return _fail(EXIT_FILE, "file", str(exc))
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except (ValueError, TypeError, NotImplementedError) as exc:
        return _fail(EXIT_USAGE, "validation", str(exc))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
