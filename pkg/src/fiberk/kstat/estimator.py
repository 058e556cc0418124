"""Density-reweighted K-function over pairs of sample points on distinct fibers."""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .. import _accel
from ..density import DensityModel
from ..errors import InvalidGridError, InvalidInputError, NonpositiveDensityError
from ..fibers import SampleSet
from ..geometry import Window, direction_distance, edge_correction, k0
from . import _kernels
from .index import build_spatial_index

RHO_FLOOR = 1e-12
POLICIES = ("exclude", "fail")


@dataclass(frozen=True)
class KGrid:
    """Evaluation grid: distances ``r1`` and direction angles ``r2``."""

    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        r1 = np.atleast_1d(np.asarray(self.r1, dtype=float))
        r2 = np.atleast_1d(np.asarray(self.r2, dtype=float))
        for name, g in (("r1", r1), ("r2", r2)):
            if g.ndim != 1 or len(g) == 0 or not np.all(np.isfinite(g)):
                raise InvalidGridError(f"{name} must be a nonempty 1-d array of finite values")
            if np.any(g < 0) or np.any(np.diff(g) <= 0):
                raise InvalidGridError(f"{name} must be nonnegative and strictly increasing")
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "r2", r2)

    @classmethod
    def regular(cls, r1_max, r1_steps, r2_values):
        """``r1_steps`` equispaced distances ending at ``r1_max`` (zero excluded)."""
        r1_steps = int(r1_steps)
        if r1_steps < 1:
            raise InvalidGridError("need at least one r1 step")
        return cls(np.linspace(r1_max / r1_steps, r1_max, r1_steps), np.sort(np.asarray(r2_values, float)))

    @property
    def shape(self):
        return len(self.r1), len(self.r2)

    def check(self, window: Window, conv):
        if self.r1[-1] >= window.min_extent:
            raise InvalidGridError(
                f"largest r1 ({self.r1[-1]:.6g}) must be below the smallest window side ({window.min_extent:.6g})"
            )
        if self.r2[-1] > conv.max_angle() + 1e-12:
            raise InvalidGridError(f"largest r2 exceeds {conv.max_angle():.6g} for this orientation convention")


@dataclass
class KEstimate:
    grid: KGrid
    k_hat: np.ndarray
    k0: np.ndarray
    diagnostics: Dict = field(default_factory=dict)

    @property
    def k_rel(self):
        return relative_k(self)

    def rows(self):
        """``(r1, r2, k_hat, k0, k_rel)`` per grid point, r2 varying fastest."""
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(self.k0 > 0, self.k_hat / np.where(self.k0 > 0, self.k0, 1.0), np.nan)
        for i, a in enumerate(self.grid.r1):
            for j, b in enumerate(self.grid.r2):
                yield float(a), float(b), float(self.k_hat[i, j]), float(self.k0[i, j]), float(rel[i, j])


def relative_k(est: KEstimate) -> np.ndarray:
    """``k_hat / k0``; the null model has value one everywhere."""
    if np.any(est.k0 <= 0):
        raise InvalidGridError("relative K needs r1 > 0 and r2 > 0 at every grid point")
    return est.k_hat / est.k0


def canonical_order(samples: SampleSet) -> np.ndarray:
    """Row order that depends only on the samples' content, so the
    floating-point pair sum is the same for any input order or fiber labels.

    Rows sort by value; exact duplicates on different fibers are ordered by
    a label-free fiber signature (the sorted row values of the fiber) and
    then by fiber id, which only separates fibers that are indistinguishable.
    """
    n = len(samples)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    rows = np.hstack([samples.locations, samples.tangents, samples.weights[:, None]]) + 0.0
    _, row_class = np.unique(rows, axis=0, return_inverse=True)
    row_class = row_class.reshape(-1)
    fibers, fiber_of = np.unique(samples.fiber_ids, return_inverse=True)
    fiber_of = fiber_of.reshape(-1)
    by_fiber = np.lexsort([row_class, fiber_of])
    sizes = np.bincount(fiber_of, minlength=len(fibers))
    signature = np.full((len(fibers), sizes.max()), -1, dtype=np.int64)
    slot = np.arange(n) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    signature[fiber_of[by_fiber], slot] = row_class[by_fiber]
    _, fiber_rank = np.unique(signature, axis=0, return_inverse=True)
    return np.lexsort([samples.fiber_ids, fiber_rank.reshape(-1)[fiber_of], row_class])


def _prepare(samples: SampleSet, models: Sequence[DensityModel], window: Window, grid: KGrid, policy):
    if policy not in POLICIES:
        raise InvalidInputError(f"policy must be one of {POLICIES}, got {policy!r}")
    if not models:
        raise InvalidInputError("need at least one density model")
    conv = models[0].conv
    if any(m.conv != conv for m in models):
        raise InvalidInputError("all density models must share one orientation convention")
    if samples.dim != window.dim or any(m.dim != window.dim for m in models):
        raise InvalidInputError("samples, density models and window must have the same dimension")
    grid.check(window, conv)
    inside = samples.inside(window)
    inside = inside.subset(canonical_order(inside))
    rho = np.stack([m(inside.locations, inside.tangents) for m in models], axis=1).reshape(len(inside), len(models))
    bad = rho <= RHO_FLOOR
    if policy == "fail" and np.any(bad):
        raise NonpositiveDensityError(f"fitted density <= {RHO_FLOOR:g} at {int(bad.any(axis=1).sum())} sample(s)")
    safe = np.where(bad, 1.0, rho)
    amp = np.where(bad, 0.0, inside.weights[:, None] / safe)
    return conv, inside, amp, bad.sum(axis=0)


def _finish(hist, counts, models, inside, n_bad, window, grid, conv, policy, method):
    k_null = k0(grid.r1[:, None], grid.r2[None, :], window.dim, conv)
    k_hat = np.cumsum(np.cumsum(hist, axis=1), axis=2) / window.volume
    out = []
    for k, model in enumerate(models):
        diag = {
            "n_samples": int(len(inside)),
            "n_pairs": int(counts[0]),
            "n_pairs_used": int(counts[k + 1]),
            "n_nonpositive": int(n_bad[k]),
            "policy": policy,
            "method": method,
            "window": list(window.extents),
            "oriented": conv.oriented,
        }
        out.append(KEstimate(grid, k_hat[k], k_null, diag))
    return out


def estimate_k_many(
    samples: SampleSet,
    models: Sequence[DensityModel],
    window: Window,
    grid: KGrid,
    policy: str = "exclude",
    use_numba: bool = None,
) -> List[KEstimate]:
    """Estimate the K-function under several density models in one pass over
    the pairs.  Samples outside the window are ignored."""
    conv, inside, amp, n_bad = _prepare(samples, models, window, grid, policy)
    use_numba = _accel.USE_NUMBA if use_numba is None else (use_numba and _accel.HAVE_NUMBA)
    idx = build_spatial_index(inside.locations, window, grid.r1[-1])
    pos = np.zeros((len(inside), 3))
    tan = np.zeros((len(inside), 3))
    pos[:, : window.dim] = inside.locations[idx.order]
    tan[:, : window.dim] = inside.tangents[idx.order]
    extents = np.ones(3)
    extents[: window.dim] = window.as_array()
    kernel = _kernels.pair_hist_numba if use_numba else _kernels.pair_hist_numpy
    hist, counts = kernel(
        pos, tan, inside.fiber_ids[idx.order], np.ascontiguousarray(amp[idx.order]),
        extents, grid.r1, grid.r2, bool(conv.oriented), idx.ncell, idx.cell_start,
    )
    method = "index-numba" if use_numba else "index-numpy"
    return _finish(hist, counts, models, inside, n_bad, window, grid, conv, policy, method)


def estimate_k(
    samples: SampleSet,
    model: DensityModel,
    window: Window,
    grid: KGrid,
    policy: str = "exclude",
    use_numba: bool = None,
) -> KEstimate:
    """Edge-corrected, density-reweighted K-function of a sampled fiber pattern.

    Sums ``w_p w_q e(x_p, x_q) / (rho(x_p, t_p) rho(x_q, t_q))`` over ordered
    pairs of samples in the window that lie on different fibers, within
    distance ``r1`` and direction distance ``r2``, divided by ``|W|``.
    Samples where ``rho <= 1e-12`` are dropped (``policy="exclude"``, counted
    in ``diagnostics["n_nonpositive"]``) or raise (``policy="fail"``).
    """
    return estimate_k_many(samples, [model], window, grid, policy, use_numba)[0]


def estimate_k_naive(
    samples: SampleSet,
    model: DensityModel,
    window: Window,
    grid: KGrid,
    policy: str = "exclude",
) -> KEstimate:
    """Reference O(n^2) version of :func:`estimate_k` without spatial index."""
    conv, inside, amp, n_bad = _prepare(samples, [model], window, grid, policy)
    x, t, fid, a = inside.locations, inside.tangents, inside.fiber_ids, amp[:, 0]
    hist = np.zeros((1,) + grid.shape)
    counts = np.zeros(2, dtype=np.int64)
    for p in range(len(inside)):
        h = x - x[p]
        dist = np.linalg.norm(h, axis=1)
        ang = direction_distance(t[p], t, conv)
        ok = (fid != fid[p]) & (dist <= grid.r1[-1]) & (ang <= grid.r2[-1])
        if not ok.any():
            continue
        contrib = a[p] * a[ok] * edge_correction(window, h[ok])
        i = np.searchsorted(grid.r1, dist[ok], side="left")
        j = np.searchsorted(grid.r2, ang[ok], side="left")
        np.add.at(hist[0], (i, j), contrib)
        counts[0] += ok.sum()
        counts[1] += np.count_nonzero(contrib)
    return _finish(hist, counts, [model], inside, n_bad, window, grid, conv, policy, "naive")[0]
