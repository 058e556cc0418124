"""Desk-scale replicate studies: null model, dependent fibers and envelope
calibration.

Replicate ``i`` of a study with master seed ``s`` uses the seed
``derive_seed(s, i)``, so results do not depend on ``n_jobs``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import _rng
from .density import fit_density
from .fibers import SamplingConfig
from .geometry import OrientationConvention, Window
from .kstat import KGrid, estimate_k_many
from .simulate import (
    DependentModelSpec,
    NullModelSpec,
    envelope,
    simulate_dependent,
    simulate_null,
)

NULL_WINDOW = (20.0, 20.0)
NULL_BETA = (3.5, -0.15, 0.0)  # 3.5 at the left edge down to 0.5 at x = 20
STUDY_R2 = (np.pi / 10, 3 * np.pi / 10, np.pi / 2)


def default_grid():
    return KGrid(np.round(np.arange(1, 21) * 0.1, 10), STUDY_R2)


def _map(func, items, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [func(i) for i in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, items))


@dataclass
class NullStudy:
    grid: KGrid
    krel_true: np.ndarray
    krel_constant: np.ndarray
    krel_linear: np.ndarray
    beta_hat: np.ndarray
    n_nonpositive: np.ndarray

    def means(self):
        return {k: getattr(self, "krel_" + k).mean(axis=0) for k in ("true", "constant", "linear")}

    def summary_rows(self):
        m = self.means()
        for i, r1 in enumerate(self.grid.r1):
            for j, r2 in enumerate(self.grid.r2):
                yield r1, r2, m["true"][i, j], m["constant"][i, j], m["linear"][i, j]


def _null_replicate(index, seed, intensity, grid, conv, spacing=None):
    rep_seed = _rng.derive_seed(seed, index)
    window = Window(NULL_WINDOW)
    pattern, true_model = simulate_null(NullModelSpec(window, NULL_BETA, 2.0, conv, rep_seed))
    if spacing is None:
        sampling = SamplingConfig.poisson(intensity, _rng.derive_seed(rep_seed, 1))
    else:
        sampling = SamplingConfig.equispaced(spacing)
    samples = pattern.discretize(sampling)
    constant = fit_density(samples, window, conv, constant=True)
    linear = fit_density(samples, window, conv)
    ests = estimate_k_many(samples, [true_model, constant, linear], window, grid)
    return [e.k_rel for e in ests], np.array(linear.trend.beta), ests[2].diagnostics["n_nonpositive"]


def null_study(n_rep=500, seed=2024, intensity=5.0, grid=None, conv=None, n_jobs=None,
               spacing=None) -> NullStudy:
    """Relative K of null-model patterns with the true, a constant and a
    fitted linear density.

    Fibers are sampled by a Poisson process of rate ``intensity`` unless
    ``spacing`` is given, in which case equispaced points are used on the
    same patterns.
    """
    grid = default_grid() if grid is None else grid
    conv = OrientationConvention() if conv is None else conv
    rep = partial(_null_replicate, seed=seed, intensity=intensity, grid=grid, conv=conv, spacing=spacing)
    out = _map(rep, range(n_rep), n_jobs)
    krel = np.array([o[0] for o in out])
    return NullStudy(
        grid, krel[:, 0], krel[:, 1], krel[:, 2],
        np.array([o[1] for o in out]), np.array([o[2] for o in out]),
    )


@dataclass
class DependentStudy:
    grid: KGrid
    krel: np.ndarray

    def summary_rows(self):
        m = self.krel.mean(axis=0)
        sd = self.krel.std(axis=0, ddof=1) if len(self.krel) > 1 else np.zeros_like(m)
        for i, r1 in enumerate(self.grid.r1):
            for j, r2 in enumerate(self.grid.r2):
                yield r1, r2, m[i, j], sd[i, j]


def _dependent_replicate(index, seed, intensity, grid, conv, correlation_scale):
    rep_seed = _rng.derive_seed(seed, index)
    window = Window(NULL_WINDOW)
    spec = DependentModelSpec(window, NULL_BETA, correlation_scale, None, 1.0, conv, rep_seed)
    pattern, _ = simulate_dependent(spec)
    samples = pattern.discretize(SamplingConfig.poisson(intensity, _rng.derive_seed(rep_seed, 1)))
    linear = fit_density(samples, window, conv)
    return estimate_k_many(samples, [linear], window, grid)[0].k_rel


def dependent_study(n_rep=200, seed=2025, intensity=5.0, grid=None, conv=None,
                    correlation_scale=2.0, n_jobs=None) -> DependentStudy:
    """Relative K of dependent-fiber patterns with a fitted linear density."""
    grid = default_grid() if grid is None else grid
    conv = OrientationConvention() if conv is None else conv
    func = partial(_dependent_replicate, seed=seed, intensity=intensity, grid=grid, conv=conv,
                   correlation_scale=correlation_scale)
    return DependentStudy(grid, np.array(_map(func, range(n_rep), n_jobs)))


CALIBRATION_WINDOW = (10.0, 10.0)
CALIBRATION_BETA = (3.0, -0.15, 0.0)


@dataclass
class CalibrationStudy:
    grid: KGrid
    outside: np.ndarray  # (n_meta, n1, n2) booleans

    def rate(self):
        return self.outside.mean(axis=0)

    def summary_rows(self):
        rate = self.rate()
        for i, r1 in enumerate(self.grid.r1):
            for j, r2 in enumerate(self.grid.r2):
                yield r1, r2, rate[i, j]


def _calibration_replicate(index, seed, intensity, grid, conv, n_sim):
    rep_seed = _rng.derive_seed(seed, index)
    window = Window(CALIBRATION_WINDOW)
    pattern, _ = simulate_null(NullModelSpec(window, CALIBRATION_BETA, 2.0, conv, rep_seed))
    sampling = SamplingConfig.poisson(intensity, 0)
    env = envelope(pattern, grid, sampling, _rng.derive_seed(rep_seed, 1), n_sim=n_sim)
    return env.outside()


def envelope_calibration(n_meta=200, seed=2026, intensity=3.0, grid=None, conv=None, n_sim=39,
                         n_jobs=None) -> CalibrationStudy:
    """How often null data leaves its own pointwise envelope."""
    grid = KGrid([0.5, 1.0], [np.pi / 4, np.pi / 2]) if grid is None else grid
    conv = OrientationConvention() if conv is None else conv
    func = partial(_calibration_replicate, seed=seed, intensity=intensity, grid=grid, conv=conv, n_sim=n_sim)
    return CalibrationStudy(grid, np.array(_map(func, range(n_meta), n_jobs)))
