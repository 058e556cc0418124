"""Fiber geometries, discretization into weighted sample points, curve fitting."""

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, sparse

from . import _rng
from .errors import DegenerateCloudError, InvalidInputError
from .geometry import OrientationConvention, Window, as_direction, canonicalize

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_CUBIC_PANELS = 64  # composite Gauss-Legendre: 64 panels x 16 nodes
_DERIV_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    midpoint: np.ndarray
    direction: np.ndarray
    length: float

    def __post_init__(self):
        mid = np.asarray(self.midpoint, dtype=float)
        direction = as_direction(self.direction)
        if direction.shape != mid.shape or mid.ndim != 1:
            raise InvalidInputError("segment midpoint and direction must be 1-d of equal size")
        if not self.length > 0:
            raise InvalidInputError(f"segment length must be > 0, got {self.length}")
        object.__setattr__(self, "midpoint", mid)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def _unchecked(cls, midpoint, direction, length):
        seg = object.__new__(cls)
        object.__setattr__(seg, "midpoint", midpoint)
        object.__setattr__(seg, "direction", direction)
        object.__setattr__(seg, "length", length)
        return seg

    @property
    def dim(self):
        return self.midpoint.size

    def total_length(self):
        return self.length

    def center(self):
        return self.midpoint

    def translated(self, offset):
        return Segment._unchecked(self.midpoint + offset, self.direction, self.length)

    def at_arclength(self, s):
        s = np.asarray(s, dtype=float)
        pts = self.midpoint + (s - 0.5 * self.length)[:, None] * self.direction
        tan = np.broadcast_to(self.direction, pts.shape).copy()
        return pts, tan

    def endpoints(self):
        half = 0.5 * self.length * self.direction
        return self.midpoint - half, self.midpoint + half


@dataclass(frozen=True)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] not in (2, 3):
            raise InvalidInputError("polyline needs >= 2 vertices in 2 or 3 dimensions")
        if np.any(np.linalg.norm(np.diff(v, axis=0), axis=1) == 0.0):
            raise InvalidInputError("consecutive polyline vertices must be distinct")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def _cumulative(self):
        edges = np.diff(self.vertices, axis=0)
        lengths = np.linalg.norm(edges, axis=1)
        return edges, lengths, np.concatenate([[0.0], np.cumsum(lengths)])

    def total_length(self):
        return float(self._cumulative()[2][-1])

    def center(self):
        pts, _ = self.at_arclength(np.array([0.5 * self.total_length()]))
        return pts[0]

    def translated(self, offset):
        return Polyline(self.vertices + offset)

    def at_arclength(self, s):
        s = np.asarray(s, dtype=float)
        edges, lengths, cum = self._cumulative()
        # a vertex takes the direction of the following edge
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
        frac = (s - cum[k]) / lengths[k]
        pts = self.vertices[k] + frac[:, None] * edges[k]
        tan = edges[k] / lengths[k][:, None]
        return pts, tan


@dataclass(frozen=True)
class CubicCurve:
    """``p(t) = sum_k coef[:, k] t**k`` for ``t`` in ``[-1, 1]``."""

    coef: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=float)
        if c.ndim != 2 or c.shape[1] != 4 or c.shape[0] not in (2, 3):
            raise InvalidInputError("cubic coefficients must have shape (d, 4)")
        object.__setattr__(self, "coef", c)

    @property
    def dim(self):
        return self.coef.shape[0]

    def position(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.polynomial.polynomial.polyval(t, row) for row in self.coef], axis=-1)

    def derivative(self, t):
        dc = self.coef[:, 1:] * np.array([1.0, 2.0, 3.0])
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.polynomial.polynomial.polyval(t, row) for row in dc], axis=-1)

    def _speed(self, t):
        return np.linalg.norm(self.derivative(t), axis=-1)

    def _panel_table(self):
        edges = np.linspace(-1.0, 1.0, _CUBIC_PANELS + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        nodes = mids[:, None] + half[:, None] * _GL_NODES
        speed = self._speed(nodes.ravel()).reshape(nodes.shape)
        panel = half * (speed @ _GL_WEIGHTS)
        return edges, np.concatenate([[0.0], np.cumsum(panel)])

    def _arclength_from(self, t0, t):
        half = 0.5 * (t - t0)
        nodes = 0.5 * (t + t0)[:, None] + half[:, None] * _GL_NODES
        speed = self._speed(nodes.ravel()).reshape(nodes.shape)
        return half * (speed @ _GL_WEIGHTS)

    def total_length(self):
        return float(self._panel_table()[1][-1])

    def center(self):
        pts, _ = self.at_arclength(np.array([0.5 * self.total_length()]))
        return pts[0]

    def translated(self, offset):
        c = self.coef.copy()
        c[:, 0] += offset
        return CubicCurve(c)

    def parameters_at(self, s):
        """Invert the arclength function by panel lookup plus Newton steps."""
        s = np.asarray(s, dtype=float)
        edges, cum = self._panel_table()
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, _CUBIC_PANELS - 1)
        t0 = edges[k]
        rem = s - cum[k]
        width = edges[k + 1] - t0
        panel_len = cum[k + 1] - cum[k]
        t = t0 + width * np.where(panel_len > 0, rem / np.where(panel_len > 0, panel_len, 1.0), 0.0)
        for _ in range(8):
            speed = self._speed(t)
            if np.any(speed < _DERIV_TOL):
                raise InvalidInputError("cubic curve derivative vanishes at a sample parameter")
            step = (self._arclength_from(t0, t) - rem) / speed
            t = np.clip(t - step, t0, edges[k + 1])
            if np.all(np.abs(step) < 1e-15):
                break
        return t

    def at_arclength(self, s):
        t = self.parameters_at(s)
        deriv = self.derivative(t)
        speed = np.linalg.norm(deriv, axis=-1)
        if np.any(speed < _DERIV_TOL):
            raise InvalidInputError("cubic curve derivative vanishes at a sample parameter")
        return self.position(t), deriv / speed[:, None]


Geometry = Union[Segment, Polyline, CubicCurve]


@dataclass(frozen=True)
class Fiber:
    id: int
    geometry: Geometry

    def __post_init__(self):
        if int(self.id) < 0:
            raise InvalidInputError(f"fiber id must be >= 0, got {self.id}")
        object.__setattr__(self, "id", int(self.id))

    @property
    def dim(self):
        return self.geometry.dim


def fiber_length(fiber: Fiber) -> float:
    return fiber.geometry.total_length()


class SamplePoint(NamedTuple):
    location: np.ndarray
    tangent: np.ndarray
    fiber_id: int
    weight: float


@dataclass
class SampleSet:
    """Columnar collection of sample points (location, tangent, fiber id, weight)."""

    locations: np.ndarray
    tangents: np.ndarray
    fiber_ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, np.shape(self.locations)[-1])
        self.tangents = np.asarray(self.tangents, dtype=float).reshape(self.locations.shape)
        self.fiber_ids = np.asarray(self.fiber_ids, dtype=np.int64).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        n = len(self.locations)
        if len(self.fiber_ids) != n or len(self.weights) != n:
            raise InvalidInputError("sample columns have different lengths")
        if n and np.any(self.weights <= 0):
            raise InvalidInputError("sample weights must be > 0")

    @classmethod
    def empty(cls, dim):
        return cls(np.empty((0, dim)), np.empty((0, dim)), np.empty(0, np.int64), np.empty(0))

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"], dim: int) -> "SampleSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty(dim)
        return cls(
            np.concatenate([p.locations for p in parts]),
            np.concatenate([p.tangents for p in parts]),
            np.concatenate([p.fiber_ids for p in parts]),
            np.concatenate([p.weights for p in parts]),
        )

    @property
    def dim(self):
        return self.locations.shape[1]

    def __len__(self):
        return len(self.weights)

    def __iter__(self) -> Iterator[SamplePoint]:
        for i in range(len(self)):
            yield SamplePoint(self.locations[i], self.tangents[i], int(self.fiber_ids[i]), float(self.weights[i]))

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.locations[mask], self.tangents[mask], self.fiber_ids[mask], self.weights[mask])

    def inside(self, window: Window) -> "SampleSet":
        return self.subset(window.contains(self.locations))

    def with_weights(self, weights) -> "SampleSet":
        return SampleSet(self.locations, self.tangents, self.fiber_ids, weights)


@dataclass(frozen=True)
class SamplingConfig:
    """Either a Poisson process of intensity ``value`` along each fiber
    (``mode="poisson"``, needs ``seed``) or midpoints of consecutive intervals
    of length ``value`` (``mode="equispaced"``)."""

    mode: str
    value: float
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("poisson", "equispaced"):
            raise InvalidInputError(f"unknown sampling mode {self.mode!r}")
        if not (np.isfinite(self.value) and self.value > 0):
            raise InvalidInputError("sampling intensity / spacing must be > 0")
        if self.mode == "poisson" and self.seed is None:
            raise InvalidInputError("poisson sampling needs an explicit seed")

    @classmethod
    def poisson(cls, intensity, seed):
        return cls("poisson", float(intensity), int(seed))

    @classmethod
    def equispaced(cls, spacing):
        return cls("equispaced", float(spacing))


def _arclengths(length, cfg: SamplingConfig, rng):
    if cfg.mode == "poisson":
        n = rng.poisson(cfg.value * length)
        return np.sort(rng.uniform(0.0, length, size=n)), 1.0 / cfg.value
    n = int(np.floor(length / cfg.value))
    return (np.arange(n) + 0.5) * cfg.value, cfg.value


def discretize_all(fibers: Sequence[Fiber], cfg: SamplingConfig, conv: OrientationConvention, dim: int) -> SampleSet:
    """Sample points along every fiber; see :func:`discretize`.

    Poisson draws for fiber ``f`` come from its own counter-based stream
    keyed by ``(cfg.seed, f.id)``, so results do not depend on fiber order.
    """
    streams = _rng.keyed_streams(cfg.seed, "sampling") if cfg.mode == "poisson" else None
    locs, tans, ids, wts = [], [], [], []
    seg_s, seg_mid, seg_dir, seg_len = [], [], [], []
    for f in fibers:
        if f.dim != dim:
            raise InvalidInputError(f"fiber {f.id} has dimension {f.dim}, expected {dim}")
        length = fiber_length(f)
        if not length > 0:
            raise InvalidInputError(f"fiber {f.id} has zero length")
        s, weight = _arclengths(length, cfg, streams(f.id) if streams else None)
        if len(s) == 0:
            continue
        ids.append(np.full(len(s), f.id, dtype=np.int64))
        wts.append(np.full(len(s), weight))
        g = f.geometry
        if isinstance(g, Segment):
            # batched below; keep a placeholder to preserve fiber order
            seg_s.append(s)
            seg_mid.append(g.midpoint)
            seg_dir.append(g.direction)
            seg_len.append(np.full(len(s), g.length))
            locs.append(None)
            tans.append(len(seg_s) - 1)
        else:
            pts, tan = g.at_arclength(s)
            locs.append(pts)
            tans.append(tan)
    if not ids:
        return SampleSet.empty(dim)
    if seg_s:
        sizes = [len(s) for s in seg_s]
        s = np.concatenate(seg_s)
        direction = np.repeat(np.array(seg_dir), sizes, axis=0)
        mid = np.repeat(np.array(seg_mid), sizes, axis=0)
        pts = mid + (s - 0.5 * np.concatenate(seg_len))[:, None] * direction
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        for i, loc in enumerate(locs):
            if loc is None:
                k = tans[i]
                locs[i] = pts[bounds[k]:bounds[k + 1]]
                tans[i] = direction[bounds[k]:bounds[k + 1]]
    return SampleSet(
        np.concatenate(locs),
        canonicalize(np.concatenate(tans), conv),
        np.concatenate(ids),
        np.concatenate(wts),
    )


def discretize(fiber: Fiber, cfg: SamplingConfig, conv: OrientationConvention) -> SampleSet:
    """Sample points along a fiber for Monte Carlo line integrals.

    Poisson mode: a homogeneous Poisson process of intensity ``cfg.value``
    in arclength, each point weighted ``1 / cfg.value``.  Equispaced mode:
    arclengths ``(k + 0.5) * spacing`` for ``k < floor(length / spacing)``,
    each weighted ``spacing``.  Tangents are canonicalized under ``conv``.
    """
    return discretize_all([fiber], cfg, conv, fiber.dim)


def _refine_cubic(pts, t, coef):
    """Joint least squares over coefficients and per-point parameters.

    Gauss-Newton (trust region) from the projection-based start; the
    Jacobian is sparse because each point only involves its own parameter.
    """
    n, d = pts.shape

    def unpack(x):
        return x[: 4 * d].reshape(4, d), x[4 * d:]

    def residuals(x):
        c, tt = unpack(x)
        return (np.vander(tt, 4, increasing=True) @ c - pts).ravel()

    rows = np.arange(n * d)
    point = rows // d

    def jacobian(x):
        c, tt = unpack(x)
        powers = np.vander(tt, 4, increasing=True)
        slope = np.vander(tt, 3, increasing=True) @ (c[1:] * np.array([[1.0], [2.0], [3.0]]))
        coord = rows % d
        r = np.concatenate([np.repeat(rows, 4), rows])
        cols = np.concatenate([(np.arange(4)[None, :] * d + coord[:, None]).ravel(), 4 * d + point])
        vals = np.concatenate([powers[point].ravel(), slope.ravel()])
        return sparse.csr_matrix((vals, (r, cols)), shape=(n * d, 4 * d + n))

    sol = optimize.least_squares(
        residuals, np.concatenate([coef.ravel(), t]), jac=jacobian, method="trf",
        tr_solver="lsmr", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200,
    )
    return unpack(sol.x)[1]


def _cubic_lstsq(pts, t):
    # affine rescaling of the parameters keeps the model class, so map to [-1, 1]
    t = 2.0 * (t - t.min()) / (t.max() - t.min()) - 1.0
    design = np.vander(t, 4, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design, pts, rcond=None)
    if rank < 4:
        raise DegenerateCloudError("curve parameters do not support a cubic fit")
    resid = design @ coef - pts
    return t, coef, float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))


def fit_cubic_curve(points, fiber_id: int = 0, refine: bool = True) -> Tuple[Fiber, float]:
    """Least-squares cubic through a fiber's point cloud.

    Parameters start as the projections onto the first principal axis,
    rescaled to ``[-1, 1]``; each coordinate gets its own degree-3 fit.  With
    ``refine`` the parameters are then optimized jointly with the
    coefficients (orthogonal-distance fit), kept only if the residual drops.
    Returns the fitted fiber and the RMS of the point residual norms.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise InvalidInputError("point cloud must have shape (n, 2) or (n, 3)")
    if pts.shape[0] < 8:
        raise InvalidInputError(f"need at least 8 points, got {pts.shape[0]}")
    centered = pts - pts.mean(axis=0)
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(1.0, float(np.abs(pts).max()))
    if sing[0] <= 1e-12 * scale * np.sqrt(len(pts)):
        raise DegenerateCloudError("point cloud is degenerate (all points coincide)")
    t, coef, rms = _cubic_lstsq(pts, centered @ vt[0])
    if refine and rms > 1e-12 * scale:
        t_ref = _refine_cubic(pts, t, coef)
        if np.ptp(t_ref) > 0:
            candidate = _cubic_lstsq(pts, t_ref)
            if candidate[2] < rms:
                t, coef, rms = candidate
    return Fiber(fiber_id, CubicCurve(coef.T)), rms
