"""Pair-binning kernels for the K-function estimator.

Both kernels take samples already sorted by grid cell (see
:func:`fiberk.kstat.index.build_spatial_index`), with coordinates padded to
three columns.  Every ordered pair ``(p, q)`` on distinct fibers with
``|x_p - x_q| <= r1[-1]`` and direction distance ``<= r2[-1]`` adds

    a[p, k] * a[q, k] * e(x_p, x_q)

to ``hist[k, i, j]``, where ``i`` (``j``) is the first grid index whose
``r1`` (``r2``) value is not exceeded by the pair, ``a = weight / rho`` and
``e`` is the translation edge correction.  Cumulating ``hist`` over both
grid axes gives the estimator.

Home cells are split into a fixed number of blocks independent of the
thread count, and block partial sums are reduced in block order, so the
result does not depend on how numba schedules threads.
"""

import numpy as np

from .._accel import njit, prange

N_BLOCKS = 64


@njit(cache=True)
def _first_not_below(grid, x):
    # first index i with grid[i] >= x; grids are short and increasing
    for i in range(grid.shape[0]):
        if grid[i] >= x:
            return i
    return grid.shape[0]


@njit(cache=True, parallel=True)
def pair_hist_numba(pos, tan, fid, amp, extents, r1, r2, oriented,
                    ncell, cell_start):
    n_models = amp.shape[1]
    n1 = r1.shape[0]
    n2 = r2.shape[0]
    r1max2 = r1[n1 - 1] * r1[n1 - 1]
    r2max = r2[n2 - 1]
    total_cells = ncell[0] * ncell[1] * ncell[2]
    n_blocks = min(N_BLOCKS, total_cells)
    partial = np.zeros((n_blocks, n_models, n1, n2))
    pairs = np.zeros((n_blocks, n_models + 1), dtype=np.int64)
    for b in prange(n_blocks):
        c_lo = (b * total_cells) // n_blocks
        c_hi = ((b + 1) * total_cells) // n_blocks
        for c in range(c_lo, c_hi):
            cz = c % ncell[2]
            cy = (c // ncell[2]) % ncell[1]
            cx = c // (ncell[2] * ncell[1])
            for p in range(cell_start[c], cell_start[c + 1]):
                for ox in range(max(cx - 1, 0), min(cx + 2, ncell[0])):
                    for oy in range(max(cy - 1, 0), min(cy + 2, ncell[1])):
                        for oz in range(max(cz - 1, 0), min(cz + 2, ncell[2])):
                            nb = (ox * ncell[1] + oy) * ncell[2] + oz
                            for q in range(cell_start[nb], cell_start[nb + 1]):
                                if fid[p] == fid[q]:
                                    continue
                                hx = pos[q, 0] - pos[p, 0]
                                hy = pos[q, 1] - pos[p, 1]
                                hz = pos[q, 2] - pos[p, 2]
                                d2 = hx * hx + hy * hy + hz * hz
                                if d2 > r1max2:
                                    continue
                                dot = tan[p, 0] * tan[q, 0] + tan[p, 1] * tan[q, 1] + tan[p, 2] * tan[q, 2]
                                if not oriented:
                                    dot = abs(dot)
                                dot = min(1.0, max(-1.0, dot))
                                ang = np.arccos(dot)
                                if ang > r2max:
                                    continue
                                i = _first_not_below(r1, np.sqrt(d2))
                                j = _first_not_below(r2, ang)
                                e = (extents[0] / (extents[0] - abs(hx))) \
                                    * (extents[1] / (extents[1] - abs(hy))) \
                                    * (extents[2] / (extents[2] - abs(hz)))
                                pairs[b, 0] += 1
                                for k in range(n_models):
                                    v = amp[p, k] * amp[q, k]
                                    if v != 0.0:
                                        partial[b, k, i, j] += v * e
                                        pairs[b, k + 1] += 1
    hist = np.zeros((n_models, n1, n2))
    counts = np.zeros(n_models + 1, dtype=np.int64)
    for b in range(n_blocks):
        hist += partial[b]
        counts += pairs[b]
    return hist, counts


def pair_hist_numpy(pos, tan, fid, amp, extents, r1, r2, oriented,
                    ncell, cell_start):
    """Vectorized counterpart of :func:`pair_hist_numba`: one numpy block per
    home cell against its (up to 27) neighbor cells."""
    n_models = amp.shape[1]
    n1, n2 = len(r1), len(r2)
    hist = np.zeros((n_models, n1, n2))
    counts = np.zeros(n_models + 1, dtype=np.int64)
    r1max2 = r1[-1] * r1[-1]
    nx, ny, nz = (int(v) for v in ncell)
    for c in range(nx * ny * nz):
        lo, hi = cell_start[c], cell_start[c + 1]
        if lo == hi:
            continue
        cz, cy, cx = c % nz, (c // nz) % ny, c // (nz * ny)
        nbrs = [
            (ox * ny + oy) * nz + oz
            for ox in range(max(cx - 1, 0), min(cx + 2, nx))
            for oy in range(max(cy - 1, 0), min(cy + 2, ny))
            for oz in range(max(cz - 1, 0), min(cz + 2, nz))
        ]
        q = np.concatenate([np.arange(cell_start[m], cell_start[m + 1]) for m in nbrs])
        p = np.arange(lo, hi)
        h = pos[q][None, :, :] - pos[p][:, None, :]
        d2 = np.einsum("pqi,pqi->pq", h, h)
        dot = np.clip(tan[p] @ tan[q].T, -1.0, 1.0) if oriented else np.minimum(np.abs(tan[p] @ tan[q].T), 1.0)
        ang = np.arccos(dot)
        ok = (fid[p][:, None] != fid[q][None, :]) & (d2 <= r1max2) & (ang <= r2[-1])
        pi, qi = np.nonzero(ok)
        if len(pi) == 0:
            continue
        hh = np.abs(h[pi, qi])
        e = np.prod(extents / (extents - hh), axis=1)
        i = np.searchsorted(r1, np.sqrt(d2[pi, qi]), side="left")
        j = np.searchsorted(r2, ang[pi, qi], side="left")
        counts[0] += len(pi)
        for k in range(n_models):
            v = amp[p[pi], k] * amp[q[qi], k]
            nz_mask = v != 0.0
            np.add.at(hist[k], (i[nz_mask], j[nz_mask]), (v * e)[nz_mask])
            counts[k + 1] += int(nz_mask.sum())
    return hist, counts
