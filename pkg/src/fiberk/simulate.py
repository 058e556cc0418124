"""Fiber pattern generators: null model, dependent fibers, null resampling,
and pointwise envelopes."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, special, stats
from scipy.spatial.distance import cdist

from . import _rng
from .density import DensityModel, LinearTrend, UniformDirections, fit_density
from .errors import EmptyDataError, IllConditionedCovarianceError, InvalidSpecError
from .fibers import Fiber, Polyline, SampleSet, SamplingConfig, Segment, discretize_all, fiber_length
from .geometry import OrientationConvention, Window, canonicalize
from .kstat import KGrid, estimate_k

MAX_DENSE_GERMS = 10_000
JITTERS = (1e-10, 1e-8, 1e-6)
HALF_LENGTH_QUANTILE = 0.999


@dataclass
class FiberPattern:
    window: Window
    conv: OrientationConvention
    fibers: List[Fiber] = field(default_factory=list)

    def __post_init__(self):
        if any(f.dim != self.window.dim for f in self.fibers):
            raise InvalidSpecError("all fibers must have the window's dimension")

    @property
    def dim(self):
        return self.window.dim

    def __len__(self):
        return len(self.fibers)

    def lengths(self):
        return np.array([fiber_length(f) for f in self.fibers])

    def mean_length(self):
        if not self.fibers:
            raise EmptyDataError("pattern has no fibers")
        return float(self.lengths().mean())

    def discretize(self, cfg: SamplingConfig) -> SampleSet:
        return discretize_all(self.fibers, cfg, self.conv, self.dim)


# -- window clipping -------------------------------------------------------------


def _segments_hit_box(p0, p1, lo, hi):
    """Vectorized Liang-Barsky test: does segment ``[p0, p1]`` meet the box?"""
    d = p1 - p0
    t_lo = np.zeros(len(p0))
    t_hi = np.ones(len(p0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(p0.shape[1]):
            a = (lo[i] - p0[:, i]) / d[:, i]
            b = (hi[i] - p0[:, i]) / d[:, i]
            flat = d[:, i] == 0
            inside = (p0[:, i] >= lo[i]) & (p0[:, i] <= hi[i])
            t_lo = np.where(flat, np.where(inside, t_lo, np.inf), np.maximum(t_lo, np.minimum(a, b)))
            t_hi = np.where(flat, t_hi, np.minimum(t_hi, np.maximum(a, b)))
    return t_lo <= t_hi


def _outline(geometry, n=65):
    """Vertices of a polyline covering the fiber (cubics are sampled in t)."""
    if isinstance(geometry, Segment):
        return np.stack(geometry.endpoints())
    if isinstance(geometry, Polyline):
        return geometry.vertices
    return geometry.position(np.linspace(-1.0, 1.0, n))


def _hits(fibers: Sequence[Fiber], window: Window) -> np.ndarray:
    p0, p1, owner = [], [], []
    seg = [i for i, f in enumerate(fibers) if isinstance(f.geometry, Segment)]
    if seg:
        mid = np.array([fibers[i].geometry.midpoint for i in seg])
        half = np.array([0.5 * fibers[i].geometry.length * fibers[i].geometry.direction for i in seg])
        p0.append(mid - half)
        p1.append(mid + half)
        owner.append(np.array(seg))
    for i, f in enumerate(fibers):
        if not isinstance(f.geometry, Segment):
            v = _outline(f.geometry)
            p0.append(v[:-1])
            p1.append(v[1:])
            owner.append(np.full(len(v) - 1, i))
    if not owner:
        return np.zeros(0, dtype=bool)
    hit = _segments_hit_box(np.concatenate(p0), np.concatenate(p1), np.zeros(window.dim), window.as_array())
    return np.bincount(np.concatenate(owner), weights=hit, minlength=len(fibers)) > 0


def hits_window(fiber: Fiber, window: Window) -> bool:
    return bool(_hits([fiber], window)[0])


def restrict_to_window(fibers: Sequence[Fiber], window: Window) -> List[Fiber]:
    """Fibers meeting the window, relabeled ``0..n-1`` in input order."""
    keep = _hits(fibers, window)
    return [Fiber(i, f.geometry) for i, f in enumerate(f for f, k in zip(fibers, keep) if k)]


def _segments_in_window(mid, direction, length, window):
    half = 0.5 * length[:, None] * direction
    hit = _segments_hit_box(mid - half, mid + half, np.zeros(window.dim), window.as_array())
    idx = np.flatnonzero(hit)
    return [Fiber(i, Segment._unchecked(mid[k], direction[k], float(length[k]))) for i, k in enumerate(idx)]


# -- germs ---------------------------------------------------------------------


def sample_poisson_linear(window: Window, trend: LinearTrend, margin: float, seed: int,
                          stream: str = "germs", clip_negative: bool = False) -> np.ndarray:
    """Poisson process with linear intensity on the window grown by ``margin``.

    Exact thinning of a homogeneous process at the largest corner value of
    the trend.  Raises if the trend is negative anywhere in the grown box,
    unless ``clip_negative`` is set, in which case the intensity is the
    positive part of the trend.
    """
    if trend.dim != window.dim:
        raise InvalidSpecError("trend and window dimensions differ")
    if margin < 0:
        raise InvalidSpecError("margin must be >= 0")
    lo, hi = window.dilated(margin)
    corners = trend.corner_values(lo, hi)
    if not clip_negative and corners.min() < -1e-12 * max(1.0, np.abs(corners).max()):
        raise InvalidSpecError(f"trend is negative inside the dilated window (min corner value {corners.min():.6g})")
    top = max(0.0, float(corners.max()))
    rng = _rng.stream(seed, stream)
    n = rng.poisson(top * float(np.prod(hi - lo)))
    pts = lo + rng.random((n, window.dim)) * (hi - lo)
    if n == 0:
        return pts
    keep = rng.random(n) * top < trend(pts)
    return pts[keep]


def uniform_directions(rng, n, dim, conv):
    if dim == 2:
        ang = rng.uniform(0.0, 2.0 * np.pi, n)
        t = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        t = rng.standard_normal((n, dim))
        t /= np.linalg.norm(t, axis=1, keepdims=True)
    return canonicalize(t, conv)


# -- null model -------------------------------------------------------------------


@dataclass(frozen=True)
class NullModelSpec:
    """Poisson germs with intensity ``beta[0] + beta[1:] . u``, each carrying
    an independent segment of Uniform(0, max_length) length and uniform
    direction."""

    window: Window
    beta: Tuple[float, ...]
    max_length: float = 2.0
    conv: OrientationConvention = field(default_factory=OrientationConvention)
    seed: int = 0

    def __post_init__(self):
        if not self.max_length > 0:
            raise InvalidSpecError("max_length must be > 0")
        object.__setattr__(self, "beta", LinearTrend(self.beta).beta)

    @property
    def mean_length(self):
        return 0.5 * self.max_length

    def true_model(self) -> DensityModel:
        return DensityModel(LinearTrend(self.beta).scaled(self.mean_length), UniformDirections(), self.conv)


def simulate_null(spec: NullModelSpec) -> Tuple[FiberPattern, DensityModel]:
    """Draw a null-model pattern; returns fibers meeting the window and the
    true density model."""
    w = spec.window
    germs = sample_poisson_linear(w, LinearTrend(spec.beta), 0.5 * spec.max_length, spec.seed)
    n = len(germs)
    length = _rng.stream(spec.seed, "lengths").uniform(0.0, spec.max_length, n)
    direction = uniform_directions(_rng.stream(spec.seed, "directions"), n, w.dim, spec.conv)
    ok = length > 0
    fibers = _segments_in_window(germs[ok], direction[ok], length[ok], w)
    return FiberPattern(w, spec.conv, fibers), spec.true_model()


# -- dependent fibers ---------------------------------------------------------------


def chi_mean(dim):
    """``E|N(0, I_dim)|``."""
    return float(np.sqrt(2.0) * np.exp(special.gammaln((dim + 1) / 2) - special.gammaln(dim / 2)))


def sigma_for_mean_length(mean_length, dim):
    """Field standard deviation giving fibers (length ``2|X|``) of the given mean length."""
    return mean_length / (2.0 * chi_mean(dim))


@dataclass(frozen=True)
class DependentModelSpec:
    """Poisson germs marked by segments from ``u - X(u)`` to ``u + X(u)``,
    where ``X`` has independent Gaussian coordinates with covariance
    ``sigma**2 * exp(-|h| / correlation_scale)``.

    ``sigma=None`` picks the value giving ``mean_length``.
    """

    window: Window
    beta: Tuple[float, ...]
    correlation_scale: float = 2.0
    sigma: Optional[float] = None
    mean_length: float = 1.0
    conv: OrientationConvention = field(default_factory=OrientationConvention)
    seed: int = 0

    def __post_init__(self):
        if not self.correlation_scale > 0:
            raise InvalidSpecError("correlation_scale must be > 0")
        if self.sigma is None:
            if not self.mean_length > 0:
                raise InvalidSpecError("mean_length must be > 0")
            object.__setattr__(self, "sigma", sigma_for_mean_length(self.mean_length, self.window.dim))
        elif not self.sigma > 0:
            raise InvalidSpecError("sigma must be > 0")
        object.__setattr__(self, "beta", LinearTrend(self.beta).beta)

    @property
    def fiber_mean_length(self):
        return 2.0 * self.sigma * chi_mean(self.window.dim)

    @property
    def margin(self):
        return float(self.sigma * stats.chi.ppf(HALF_LENGTH_QUANTILE, self.window.dim))

    def true_model(self) -> DensityModel:
        return DensityModel(LinearTrend(self.beta).scaled(self.fiber_mean_length), UniformDirections(), self.conv)


def exponential_covariance(points, sigma, scale):
    return sigma**2 * np.exp(-cdist(points, points) / scale)


def correlated_gaussian(cov, n_fields, rng):
    """``n_fields`` independent N(0, cov) vectors as columns, by Cholesky with
    jitter escalation."""
    n = len(cov)
    if n == 0:
        return np.zeros((0, n_fields))
    scale = float(np.mean(np.diag(cov)))
    for jitter in JITTERS:
        try:
            chol = linalg.cholesky(cov + jitter * scale * np.eye(n), lower=True)
            break
        except linalg.LinAlgError:
            continue
    else:
        raise IllConditionedCovarianceError("covariance is not positive definite even with jitter 1e-6")
    return chol @ rng.standard_normal((n, n_fields))


def simulate_dependent(spec: DependentModelSpec) -> Tuple[FiberPattern, DensityModel]:
    """Draw a dependent-fiber pattern; returns fibers meeting the window and
    the true density model."""
    w = spec.window
    germs = sample_poisson_linear(w, LinearTrend(spec.beta), spec.margin, spec.seed)
    if len(germs) > MAX_DENSE_GERMS:
        raise InvalidSpecError(f"{len(germs)} germs exceed the dense-factorization limit {MAX_DENSE_GERMS}")
    cov = exponential_covariance(germs, spec.sigma, spec.correlation_scale)
    field_values = correlated_gaussian(cov, w.dim, _rng.stream(spec.seed, "grf"))
    half = np.linalg.norm(field_values, axis=1)
    ok = half > 0
    direction = canonicalize(field_values[ok] / half[ok, None], spec.conv)
    fibers = _segments_in_window(germs[ok], direction, 2.0 * half[ok], w)
    return FiberPattern(w, spec.conv, fibers), spec.true_model()


# -- null resampling and envelopes --------------------------------------------------


def _reach(fiber: Fiber) -> float:
    """Largest distance from the fiber's arclength midpoint to its outline."""
    if isinstance(fiber.geometry, Segment):
        return 0.5 * fiber.geometry.length
    return float(np.linalg.norm(_outline(fiber.geometry) - fiber.geometry.center(), axis=1).max())


def resample_null(pattern: FiberPattern, fitted: DensityModel, mean_len: float, seed: int) -> FiberPattern:
    """Null-model surrogate: Poisson germs with intensity ``trend / mean_len``,
    each carrying a fiber drawn with replacement from ``pattern`` and
    recentred at the germ.

    A fitted trend that is positive on the window may still dip below zero
    in the margin around it; the germ intensity there is its positive part.
    A trend that is negative on the window itself is an error.
    """
    if not pattern.fibers:
        raise EmptyDataError("cannot resample an empty pattern")
    if not mean_len > 0:
        raise InvalidSpecError("mean fiber length must be > 0")
    w = pattern.window
    corners = fitted.trend.corner_values(np.zeros(w.dim), w.as_array())
    if corners.min() < -1e-12 * max(1.0, np.abs(corners).max()):
        raise InvalidSpecError(f"fitted trend is negative on the window (min corner value {corners.min():.6g})")
    margin = max(_reach(f) for f in pattern.fibers)
    germs = sample_poisson_linear(pattern.window, fitted.trend.scaled(1.0 / mean_len), margin, seed,
                                  clip_negative=True)
    rng = _rng.stream(seed, "resampling")
    pick = rng.integers(0, len(pattern.fibers), len(germs))
    centers = [f.geometry.center() for f in pattern.fibers]
    fibers = [
        Fiber(i, pattern.fibers[k].geometry.translated(u - centers[k]))
        for i, (k, u) in enumerate(zip(pick, germs))
    ]
    return FiberPattern(pattern.window, pattern.conv, restrict_to_window(fibers, pattern.window))


def fit_linear_uniform(samples: SampleSet, window: Window, conv: OrientationConvention) -> DensityModel:
    return fit_density(samples, window, conv, eta="uniform")


@dataclass
class Envelope:
    grid: KGrid
    lo: np.ndarray
    hi: np.ndarray
    data: np.ndarray
    sims: np.ndarray

    def outside(self):
        return (self.data < self.lo) | (self.data > self.hi)

    def rows(self):
        for i, a in enumerate(self.grid.r1):
            for j, b in enumerate(self.grid.r2):
                yield float(a), float(b), float(self.lo[i, j]), float(self.hi[i, j]), float(self.data[i, j])


def relative_k_of(pattern: FiberPattern, sampling: SamplingConfig, grid: KGrid,
                  fit: Callable = fit_linear_uniform, policy: str = "exclude"):
    """Discretize, fit the density and return ``(K_rel, fitted model)``."""
    samples = pattern.discretize(sampling)
    model = fit(samples, pattern.window, pattern.conv)
    return estimate_k(samples, model, pattern.window, grid, policy).k_rel, model


def _with_seed(sampling: SamplingConfig, seed: int) -> SamplingConfig:
    if sampling.mode == "poisson":
        return SamplingConfig.poisson(sampling.value, seed)
    return sampling


def envelope(
    pattern: FiberPattern,
    grid: KGrid,
    sampling: SamplingConfig,
    seed: int,
    n_sim: int = 39,
    fit: Callable = fit_linear_uniform,
    policy: str = "exclude",
) -> Envelope:
    """Pointwise min/max of relative K over ``n_sim`` null resamples.

    Each resample is rediscretized and its density refitted with ``fit``,
    exactly as for the data.  With 39 simulations each side has pointwise
    level 1/40.
    """
    if n_sim < 1:
        raise InvalidSpecError("n_sim must be >= 1")
    grid.check(pattern.window, pattern.conv)
    data, fitted = relative_k_of(pattern, _with_seed(sampling, _rng.derive_seed(seed, 0, 0)), grid, fit, policy)
    mean_len = pattern.mean_length()
    sims = np.empty((n_sim,) + grid.shape)
    for i in range(n_sim):
        surrogate = resample_null(pattern, fitted, mean_len, _rng.derive_seed(seed, i + 1, 0))
        cfg = _with_seed(sampling, _rng.derive_seed(seed, i + 1, 1))
        sims[i], _ = relative_k_of(surrogate, cfg, grid, fit, policy)
    return Envelope(grid, sims.min(axis=0), sims.max(axis=0), data, sims)
