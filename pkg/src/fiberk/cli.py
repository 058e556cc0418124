"""Command-line interface: ``fiberk <command> ...``.

Exit codes: 0 success, 2 invalid configuration or grid, 3 unreadable or
unusable data.  Stochastic commands require ``--seed``.
"""

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import experiments, io
from .density import fit_density
from .errors import ConfigError, FiberKError, InvalidGridError, InvalidSpecError
from .fibers import SamplingConfig
from .geometry import Window
from .kstat import KGrid, estimate_k
from .simulate import NullModelSpec, envelope, simulate_dependent, simulate_null

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

_PI_RE = re.compile(r"^\s*([0-9]*\.?[0-9]*(?:[eE][-+]?[0-9]+)?)\s*\*?\s*pi\s*(?:/\s*([0-9]*\.?[0-9]+))?\s*$")


class UsageError(Exception):
    """Bad command-line arguments (exit code 2)."""


def parse_angle(text: str) -> float:
    """A float, or a multiple of pi such as ``pi/10``, ``3pi/10`` or ``0.5*pi``."""
    m = _PI_RE.match(text.lower())
    if m:
        factor = float(m.group(1)) if m.group(1) else 1.0
        divisor = float(m.group(2)) if m.group(2) else 1.0
        return factor * np.pi / divisor
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"cannot parse angle {text!r}") from None


def parse_angles(text: str):
    return [parse_angle(t) for t in text.split(",") if t.strip()]


def _sampling(args) -> SamplingConfig:
    if args.spacing is not None:
        return SamplingConfig.equispaced(args.spacing)
    if args.seed is None:
        raise UsageError("--seed is required for Poisson sampling (--phi)")
    return SamplingConfig.poisson(args.phi, args.seed)


def _need_seed(args):
    if args.seed is None:
        raise UsageError("--seed is required for this command")
    return args.seed


def _grid(args) -> KGrid:
    return KGrid.regular(args.r1_max, args.r1_steps, parse_angles(args.r2_list))


def _sidecar(out, suffix):
    out = Path(out)
    return out.with_name(out.stem + suffix)


def _window_arg(text):
    return Window(tuple(float(v) for v in text.split(",")))


# -- commands ------------------------------------------------------------------------


def cmd_simulate(args):
    spec = io.read_config(args.config, seed=_need_seed(args))
    pattern, true_model = (simulate_null if isinstance(spec, NullModelSpec) else simulate_dependent)(spec)
    io.write_pattern(args.out, pattern)
    io.write_density(_sidecar(args.out, ".density.json"), true_model)
    print(f"{len(pattern)} fibers -> {args.out}")


def cmd_discretize(args):
    pattern = io.read_pattern(args.pattern)
    samples = pattern.discretize(_sampling(args))
    io.write_samples_csv(args.out, samples)
    print(f"{len(samples)} samples -> {args.out}")


def _residual_summary(samples, window, model, cells=4):
    """Observed sampled length against the fitted trend integral on a coarse
    grid of ``cells**d`` boxes."""
    a = window.as_array()
    inside = samples.inside(window)
    idx = np.minimum((inside.locations / a * cells).astype(int), cells - 1)
    flat = np.ravel_multi_index(idx.T, (cells,) * window.dim) if len(inside) else np.zeros(0, int)
    observed = np.bincount(flat, weights=inside.weights, minlength=cells**window.dim)
    centers = (np.stack(np.unravel_index(np.arange(cells**window.dim), (cells,) * window.dim), axis=1) + 0.5) / cells * a
    expected = model.trend(centers) * window.volume / cells**window.dim  # exact for a linear trend
    resid = observed - expected
    return {
        "cells": int(cells**window.dim),
        "max_abs": float(np.abs(resid).max()),
        "rms": float(np.sqrt(np.mean(resid**2))),
        "relative_rms": float(np.sqrt(np.mean(resid**2)) / max(np.mean(np.abs(expected)), 1e-300)),
    }


def cmd_fit(args):
    pattern = io.read_pattern(args.pattern)
    window = _window_arg(args.window) if args.window else pattern.window
    samples = pattern.discretize(_sampling(args))
    bins = None
    if args.bins:
        bins = [int(b) for b in args.bins.split(",")]
        bins = bins[0] if len(bins) == 1 else bins
    model = fit_density(samples, window, pattern.conv, args.eta, args.constant, bins, args.symmetric_height)
    beta = np.asarray(model.trend.beta)
    corners = model.trend.corner_values(np.zeros(window.dim), window.as_array())
    diagnostics = {
        "n_samples": int(len(samples)),
        "n_inside": int(len(samples.inside(window))),
        "sampled_length": float(samples.inside(window).weights.sum()),
        "trend_min": float(corners.min()),
        "trend_max": float(corners.max()),
        "slope_to_intercept": [float(b / beta[0]) if beta[0] != 0 else None for b in beta[1:]],
        "residuals": _residual_summary(samples, window, model),
    }
    io.write_density(args.out, model, diagnostics)
    print("beta = " + ", ".join(format(b, ".6g") for b in beta) + f" -> {args.out}")


def _load_samples(args):
    if args.pattern:
        pattern = io.read_pattern(args.pattern)
        window = _window_arg(args.window) if args.window else pattern.window
        return pattern.discretize(_sampling(args)), window, pattern.conv
    if not args.window:
        raise UsageError("--window is required with --samples")
    return io.read_samples_csv(args.samples), _window_arg(args.window), None


def cmd_kfun(args):
    samples, window, conv = _load_samples(args)
    grid = _grid(args)
    if args.density:
        model = io.read_density(args.density)
    else:
        if conv is None:
            raise UsageError("--density is required with --samples")
        model = fit_density(samples, window, conv)
    est = estimate_k(samples, model, window, grid, args.policy)
    io.write_k_csv(args.out, est)
    io.write_json(_sidecar(args.out, ".meta.json"), est.diagnostics)
    print(f"{grid.shape[0]}x{grid.shape[1]} grid -> {args.out}")


def cmd_envelope(args):
    pattern = io.read_pattern(args.pattern)
    seed = _need_seed(args)
    sampling = _sampling(args)
    env = envelope(pattern, _grid(args), sampling, seed, n_sim=args.nsim, policy=args.policy)
    io.write_envelope_csv(args.out, env)
    print(f"{args.nsim} simulations, {int(env.outside().sum())} grid points outside -> {args.out}")


def cmd_study(args):
    seed = _need_seed(args)
    kw = {"n_jobs": args.jobs}
    if args.phi is not None:
        kw["intensity"] = args.phi
    if args.kind == "null":
        study = experiments.null_study(args.n_rep or 500, seed, **kw)
        header = ["r1", "r2", "krel_true", "krel_constant", "krel_linear"]
    elif args.kind == "dependent":
        study = experiments.dependent_study(args.n_rep or 200, seed, correlation_scale=args.correlation_scale, **kw)
        header = ["r1", "r2", "krel_mean", "krel_sd"]
    else:
        study = experiments.envelope_calibration(args.n_rep or 200, seed, **kw)
        header = ["r1", "r2", "outside_rate"]
    io.write_table(args.out, header, study.summary_rows())
    print(f"{args.kind} study -> {args.out}")


# -- parser ------------------------------------------------------------------------------


def _add_sampling(p, phi_default=None):
    g = p.add_mutually_exclusive_group(required=phi_default is None)
    g.add_argument("--phi", type=float, default=phi_default, help="Poisson sampling intensity per unit length")
    g.add_argument("--spacing", type=float, help="equispaced sampling step")


def _add_grid(p):
    p.add_argument("--r1-max", type=float, default=2.0)
    p.add_argument("--r1-steps", type=int, default=20)
    p.add_argument("--r2-list", default="pi/10,3pi/10,pi/2", help="comma separated, e.g. pi/10,0.5")
    p.add_argument("--policy", choices=["exclude", "fail"], default="exclude")


def build_parser():
    parser = argparse.ArgumentParser(prog="fiberk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a fiber pattern from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discretize", help="write sample points of a pattern as CSV")
    p.add_argument("--pattern", required=True)
    _add_sampling(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("fit", help="fit a density model to a pattern")
    p.add_argument("--pattern", required=True)
    _add_sampling(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--eta", choices=["uniform", "hist"], default="uniform")
    p.add_argument("--bins", help="bin count, or height,angle counts in 3D")
    p.add_argument("--symmetric-height", action="store_true")
    p.add_argument("--constant", action="store_true", help="fit an intercept only")
    p.add_argument("--window", help="comma separated extents (default: the pattern's)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kfun", help="estimate the K-function on a grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pattern")
    src.add_argument("--samples")
    p.add_argument("--density", help="density JSON (default: fit linear trend, uniform directions)")
    p.add_argument("--window")
    _add_sampling(p, phi_default=10.0)
    p.add_argument("--seed", type=int)
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kfun)

    p = sub.add_parser("envelope", help="pointwise envelope from null resamples")
    p.add_argument("--pattern", required=True)
    p.add_argument("--nsim", type=int, default=39)
    p.add_argument("--seed", type=int)
    _add_sampling(p, phi_default=10.0)
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("study", help="run a replicate study and write mean curves")
    p.add_argument("kind", choices=["null", "dependent", "calibration"])
    p.add_argument("--n-rep", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--phi", type=float, help="sampling intensity (default: the study's own)")
    p.add_argument("--correlation-scale", type=float, default=2.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (UsageError, ConfigError, InvalidGridError, InvalidSpecError) as exc:
        print(f"fiberk: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FiberKError, ValueError, OSError) as exc:
        print(f"fiberk: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
