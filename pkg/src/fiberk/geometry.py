"""Windows, direction metrics, edge corrections and null-model constants.

Directions are plain numpy arrays of shape ``(..., d)`` with unit rows;
every function here is vectorized over leading axes.  Only ``d = 2`` and
``d = 3`` are supported.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InfiniteCorrectionError, InvalidInputError

UNIT_TOL = 1e-9
RENORM_TOL = 1e-6
DIMS = (2, 3)


def _check_dim(dim):
    if dim not in DIMS:
        raise InvalidInputError(f"dimension must be 2 or 3, got {dim}")
    return dim


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[0, a_1] x ... x [0, a_d]``."""

    extents: Tuple[float, ...]

    def __post_init__(self):
        ext = tuple(float(a) for a in np.ravel(self.extents))
        _check_dim(len(ext))
        if not all(np.isfinite(a) and a > 0 for a in ext):
            raise InvalidInputError(f"window extents must be finite and > 0, got {ext}")
        object.__setattr__(self, "extents", ext)

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def min_extent(self) -> float:
        return min(self.extents)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.extents, dtype=float)

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points in the closed box."""
        pts = np.asarray(points, dtype=float)
        a = self.as_array()
        return np.all((pts >= 0.0) & (pts <= a), axis=-1)

    def dilated(self, margin: float) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the box grown by ``margin`` on every side."""
        a = self.as_array()
        return np.full(self.dim, -float(margin)), a + float(margin)


def default_pole(dim: int) -> Tuple[float, ...]:
    """Second coordinate axis, e.g. ``(0, 1, 0)`` in 3D."""
    _check_dim(dim)
    pole = [0.0] * dim
    pole[1] = 1.0
    return tuple(pole)


@dataclass(frozen=True)
class OrientationConvention:
    """Whether tangents are oriented; unoriented ones live on the hemisphere
    ``{t : t . pole >= 0}``.  ``pole=None`` means :func:`default_pole`."""

    oriented: bool = False
    pole: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "oriented", bool(self.oriented))
        if self.pole is not None:
            pole = as_direction(self.pole)
            if pole.ndim != 1:
                raise InvalidInputError("pole must be a single direction")
            object.__setattr__(self, "pole", tuple(float(x) for x in pole))

    def pole_for(self, dim: int) -> np.ndarray:
        if self.pole is None:
            return np.asarray(default_pole(dim))
        if len(self.pole) != dim:
            raise InvalidInputError(f"pole has dimension {len(self.pole)}, tangents have {dim}")
        return np.asarray(self.pole)

    def max_angle(self) -> float:
        return np.pi if self.oriented else np.pi / 2


ORIENTED = OrientationConvention(oriented=True)
UNORIENTED = OrientationConvention(oriented=False)


def as_direction(v) -> np.ndarray:
    """Validate unit vectors, renormalizing rows that are off by at most 1e-6."""
    arr = np.array(v, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] not in DIMS:
        raise InvalidInputError(f"directions must have 2 or 3 components, got shape {arr.shape}")
    norm = np.linalg.norm(arr, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)) or np.any(np.abs(norm - 1.0) > RENORM_TOL):
        raise InvalidInputError("direction is not a unit vector (|norm - 1| > 1e-6)")
    off = np.abs(norm - 1.0) > UNIT_TOL
    if np.any(off):
        arr = np.where(off, arr / norm, arr)
    return arr


def _dot(t1, t2):
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if t1.shape[-1] != t2.shape[-1]:
        raise InvalidInputError(f"dimension mismatch: {t1.shape[-1]} vs {t2.shape[-1]}")
    return np.clip(np.sum(t1 * t2, axis=-1), -1.0, 1.0)


def angle_distance(t1, t2):
    """Angle between unit vectors, in ``[0, pi]``."""
    return np.arccos(_dot(t1, t2))


def line_distance(t1, t2):
    """Angle between the lines spanned by ``t1`` and ``t2``, in ``[0, pi/2]``."""
    return np.arccos(np.abs(_dot(t1, t2)))


def direction_distance(t1, t2, conv: OrientationConvention):
    """Metric on the direction space of ``conv``."""
    return angle_distance(t1, t2) if conv.oriented else line_distance(t1, t2)


def canonicalize(t, conv: OrientationConvention) -> np.ndarray:
    """Map tangents onto the direction space of ``conv``.

    Unoriented tangents are flipped onto the hemisphere around the pole.  On
    the boundary (dot with the pole exactly 0) the representative whose
    first nonzero coordinate is positive is kept.
    """
    t = np.array(t, dtype=float)
    if conv.oriented:
        return t
    pole = conv.pole_for(t.shape[-1])
    d = t @ pole
    first_nz = np.take_along_axis(
        t, np.argmax(t != 0.0, axis=-1)[..., None], axis=-1
    )[..., 0]
    flip = (d < 0.0) | ((d == 0.0) & (first_nz < 0.0))
    return np.where(flip[..., None], -t, t)


def cap_fraction(r2, dim: int, conv: OrientationConvention):
    """Normalized measure of the directions within angle ``r2`` of a fixed one."""
    _check_dim(dim)
    r2 = np.asarray(r2, dtype=float)
    hi = conv.max_angle()
    if np.any(~np.isfinite(r2)) or np.any(r2 < 0.0) or np.any(r2 > hi + 1e-12):
        raise InvalidInputError(f"r2 must lie in [0, {hi:.6g}]")
    r2 = np.minimum(r2, hi)
    frac = r2 / np.pi if dim == 2 else 0.5 * (1.0 - np.cos(r2))
    if not conv.oriented:
        frac = np.minimum(1.0, 2.0 * frac)
    return frac


def ball_volume(dim: int, r):
    _check_dim(dim)
    r = np.asarray(r, dtype=float)
    return np.pi * r**2 if dim == 2 else (4.0 / 3.0) * np.pi * r**3


def k0(r1, r2, dim: int, conv: OrientationConvention):
    """K-function of the null model: ball volume times cap fraction."""
    r1 = np.asarray(r1, dtype=float)
    if np.any(r1 < 0.0):
        raise InvalidInputError("r1 must be >= 0")
    return ball_volume(dim, r1) * cap_fraction(r2, dim, conv)


def edge_correction(window: Window, h):
    """Translation edge correction ``|W| / |W intersect (W + h)|``."""
    h = np.abs(np.asarray(h, dtype=float))
    a = window.as_array()
    if h.shape[-1] != window.dim:
        raise InvalidInputError(f"displacement has dimension {h.shape[-1]}, window {window.dim}")
    overlap = a - h
    if np.any(overlap <= 0.0):
        raise InfiniteCorrectionError("translated windows do not overlap")
    return window.volume / np.prod(overlap, axis=-1)
