"""First-moment density ``rho(z, s) = eta(s) * (beta_0 + beta . z)``.

``eta`` is a probability density on the direction space with respect to
the normalized surface measure, so a uniform distribution of directions has
``eta == 1``.
"""

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg

from .errors import EmptyDataError, InvalidInputError
from .fibers import SampleSet
from .geometry import OrientationConvention, Window, as_direction

DEFAULT_BINS = 10
MASS_TOL = 1e-9


@dataclass(frozen=True)
class LinearTrend:
    """Spatial factor ``beta[0] + beta[1:] . z``."""

    beta: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in np.ravel(self.beta))
        if len(b) not in (3, 4) or not all(np.isfinite(b)):
            raise InvalidInputError(f"beta must hold d+1 finite values for d in (2, 3), got {b}")
        object.__setattr__(self, "beta", b)

    @property
    def dim(self):
        return len(self.beta) - 1

    def __call__(self, z):
        b = np.asarray(self.beta)
        return b[0] + np.asarray(z, dtype=float) @ b[1:]

    def scaled(self, c):
        return LinearTrend(tuple(c * x for x in self.beta))

    def corner_values(self, lo, hi):
        """Trend at every corner of the box ``[lo, hi]``; extremes of a linear
        function over a box are attained there."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        grids = np.meshgrid(*[(a, b) for a, b in zip(lo, hi)], indexing="ij")
        corners = np.stack([g.ravel() for g in grids], axis=1)
        return self(corners)


# -- directional densities ---------------------------------------------------


@dataclass(frozen=True)
class UniformDirections:
    variant = "uniform"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.ones(s.shape[:-1])


def _check_histogram(edges, masses, lo, hi, what):
    edges = np.asarray(edges, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or len(masses) != len(edges) - 1:
        raise InvalidInputError(f"{what}: need k+1 edges for k masses")
    if np.any(np.diff(edges) <= 0):
        raise InvalidInputError(f"{what}: bin edges must be increasing")
    if abs(edges[0] - lo) > 1e-9 or abs(edges[-1] - hi) > 1e-9:
        raise InvalidInputError(f"{what}: edges must span [{lo:.6g}, {hi:.6g}]")
    if np.any(masses < 0) or abs(masses.sum() - 1.0) > MASS_TOL:
        raise InvalidInputError(f"{what}: masses must be >= 0 and sum to 1")
    return edges, masses


def _bin_index(edges, x):
    return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)


def _bin_density(edges, masses, x):
    """Histogram density relative to the uniform law on ``[edges[0], edges[-1]]``."""
    frac = np.diff(edges) / (edges[-1] - edges[0])
    return (masses / frac)[_bin_index(edges, x)]


def angle_range(oriented):
    return (-np.pi, np.pi) if oriented else (0.0, np.pi)


def plane_angle(s, oriented):
    """Polar angle of 2D tangents; unoriented tangents map to ``[0, pi)``."""
    s = np.asarray(s, dtype=float)
    ang = np.arctan2(s[..., 1], s[..., 0])
    return ang if oriented else np.mod(ang, np.pi)


def cylinder_range(oriented):
    return (-1.0, 1.0), ((-np.pi, np.pi) if oriented else (-np.pi / 2, np.pi / 2))


def cylinder_coords(s, oriented):
    """Height ``s_1`` and angle of ``(s_2, s_3)``.

    The map is area preserving, so densities carry over unchanged.  For
    unoriented tangents the representative with ``s_2 >= 0`` is used (ties:
    first nonzero coordinate positive), which gives the angle
    ``arctan(s_3 / s_2)`` in ``[-pi/2, pi/2]`` with ``arctan(0/0) = 0``.
    """
    s = np.array(s, dtype=float)
    if not oriented:
        first_nz = np.take_along_axis(s, np.argmax(s != 0.0, axis=-1)[..., None], axis=-1)[..., 0]
        flip = (s[..., 1] < 0) | ((s[..., 1] == 0) & (first_nz < 0))
        s = np.where(flip[..., None], -s, s)
        s = s + 0.0  # drop negative zeros so arctan2 stays in [-pi/2, pi/2]
    return s[..., 0], np.arctan2(s[..., 2], s[..., 1])


@dataclass(frozen=True)
class AngleHistogram:
    """Piecewise constant density of 2D tangent angles."""

    edges: np.ndarray
    masses: np.ndarray
    oriented: bool = False
    variant = "histogram2d"

    def __post_init__(self):
        lo, hi = angle_range(self.oriented)
        edges, masses = _check_histogram(self.edges, self.masses, lo, hi, "angle histogram")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)

    def __call__(self, s):
        return _bin_density(self.edges, self.masses, plane_angle(s, self.oriented))


@dataclass(frozen=True)
class CylinderHistogram:
    """Product of height and angle histograms for 3D tangents."""

    height_edges: np.ndarray
    height_masses: np.ndarray
    angle_edges: np.ndarray
    angle_masses: np.ndarray
    oriented: bool = False
    variant = "histogram_cyl3d"

    def __post_init__(self):
        (hlo, hhi), (alo, ahi) = cylinder_range(self.oriented)
        he, hm = _check_histogram(self.height_edges, self.height_masses, hlo, hhi, "height histogram")
        ae, am = _check_histogram(self.angle_edges, self.angle_masses, alo, ahi, "angle histogram")
        object.__setattr__(self, "height_edges", he)
        object.__setattr__(self, "height_masses", hm)
        object.__setattr__(self, "angle_edges", ae)
        object.__setattr__(self, "angle_masses", am)

    def __call__(self, s):
        h, phi = cylinder_coords(s, self.oriented)
        return _bin_density(self.height_edges, self.height_masses, h) * _bin_density(
            self.angle_edges, self.angle_masses, phi
        )


DirectionalDensity = Union[UniformDirections, AngleHistogram, CylinderHistogram]


@dataclass(frozen=True)
class DensityModel:
    trend: LinearTrend
    eta: DirectionalDensity = field(default_factory=UniformDirections)
    conv: OrientationConvention = field(default_factory=OrientationConvention)

    @property
    def dim(self):
        return self.trend.dim

    def __call__(self, z, s):
        return rho_eval(self, z, s)

    def scaled(self, c):
        return DensityModel(self.trend.scaled(c), self.eta, self.conv)


def rho_eval(model: DensityModel, z, s):
    """``eta(s) * trend(z)``; may be nonpositive where the trend is."""
    return model.eta(s) * model.trend(z)


# -- fitting -------------------------------------------------------------------


def moment_matrix(window: Window) -> np.ndarray:
    """Integral over the window of ``(1, z)^T (1, z)``."""
    a = window.as_array()
    first = np.concatenate([[1.0], a / 2.0])
    R = np.outer(first, first)
    R[1:, 1:] = np.outer(a, a) / 4.0
    R[np.arange(1, window.dim + 1), np.arange(1, window.dim + 1)] = a**2 / 3.0
    return window.volume * R


def estimate_beta(samples: SampleSet, window: Window, constant: bool = False) -> LinearTrend:
    """Solve ``R beta = L`` with ``L`` the weighted sum of ``(1, x)`` over
    samples inside the window.

    With ``constant=True`` only the intercept is fitted, i.e. total sampled
    length over window volume.
    """
    inside = samples.inside(window)
    if len(inside) == 0:
        raise EmptyDataError("no sample points inside the window")
    design = np.hstack([np.ones((len(inside), 1)), inside.locations])
    L = inside.weights @ design
    if constant:
        beta = np.zeros(window.dim + 1)
        beta[0] = L[0] / window.volume
        return LinearTrend(beta)
    return LinearTrend(linalg.solve(moment_matrix(window), L, assume_a="pos"))


def _uniform_edges(n, lo, hi):
    if int(n) < 1:
        raise InvalidInputError("need at least one bin")
    return np.linspace(lo, hi, int(n) + 1)


def _masses(edges, x, weights):
    counts = np.bincount(_bin_index(edges, x), weights=weights, minlength=len(edges) - 1)
    return counts / counts.sum()


def fit_eta_histogram(
    tangents,
    conv: OrientationConvention,
    bins: Union[int, Sequence[int], None] = None,
    weights=None,
    symmetric_height: bool = False,
) -> DirectionalDensity:
    """Histogram estimate of the tangent density.

    2D: histogram of the tangent angle.  3D: product of the marginal
    histograms of the cylinder coordinates (height, angle).  Bins are
    uniform in the coordinate; ``bins`` is one count or ``(height, angle)``.
    ``symmetric_height`` mirrors the height histogram around zero.
    """
    t = as_direction(np.asarray(tangents, dtype=float).reshape(-1, np.shape(tangents)[-1]))
    if len(t) == 0:
        raise EmptyDataError("no tangents to fit")
    w = None if weights is None else np.asarray(weights, dtype=float)
    bins = DEFAULT_BINS if bins is None else bins
    if t.shape[1] == 2:
        edges = _uniform_edges(np.ravel(bins)[0], *angle_range(conv.oriented))
        return AngleHistogram(edges, _masses(edges, plane_angle(t, conv.oriented), w), conv.oriented)
    nh, na = (bins, bins) if np.ndim(bins) == 0 else tuple(bins)
    (hlo, hhi), (alo, ahi) = cylinder_range(conv.oriented)
    h, phi = cylinder_coords(t, conv.oriented)
    he, ae = _uniform_edges(nh, hlo, hhi), _uniform_edges(na, alo, ahi)
    hm = _masses(he, h, w)
    if symmetric_height:
        hm = 0.5 * (hm + hm[::-1])
    return CylinderHistogram(he, hm, ae, _masses(ae, phi, w), conv.oriented)


def fit_density(
    samples: SampleSet,
    window: Window,
    conv: OrientationConvention,
    eta: str = "uniform",
    constant: bool = False,
    bins=None,
    symmetric_height: bool = False,
) -> DensityModel:
    """Linear (or constant) trend plus a uniform or histogram ``eta``.

    The histogram uses the tangents of the samples inside the window,
    weighted by their Monte Carlo weights.
    """
    trend = estimate_beta(samples, window, constant=constant)
    if eta == "uniform":
        return DensityModel(trend, UniformDirections(), conv)
    if eta in ("hist", "histogram"):
        inside = samples.inside(window)
        fitted = fit_eta_histogram(inside.tangents, conv, bins, inside.weights, symmetric_height)
        return DensityModel(trend, fitted, conv)
    raise InvalidInputError(f"eta must be 'uniform' or 'hist', got {eta!r}")
