"""Uniform-grid bucketing of sample points."""

from dataclasses import dataclass

import numpy as np

from ..geometry import Window


@dataclass(frozen=True)
class GridIndex:
    """Samples bucketed into cells at least ``cell_size`` wide.

    ``order`` permutes the input rows into cell order; the rows of cell
    ``c`` are ``order[cell_start[c]:cell_start[c + 1]]``.  ``ncell`` always
    has three entries (a 2D window has a single cell along the third axis).
    """

    ncell: np.ndarray
    cell_start: np.ndarray
    order: np.ndarray
    cell_width: np.ndarray

    @property
    def n_cells(self):
        return int(np.prod(self.ncell))


def build_spatial_index(locations, window: Window, cell_size: float) -> GridIndex:
    """Bucket points so all pairs within ``cell_size`` lie in adjacent cells."""
    pts = np.asarray(locations, dtype=float)
    a = window.as_array()
    ncell = np.ones(3, dtype=np.int64)
    if cell_size > 0:
        ncell[: window.dim] = np.maximum(1, np.floor(a / cell_size)).astype(np.int64)
    width = np.ones(3)
    width[: window.dim] = a / ncell[: window.dim]
    coords = np.zeros((len(pts), 3), dtype=np.int64)
    if len(pts):
        coords[:, : window.dim] = np.clip(
            np.floor(pts / width[: window.dim]).astype(np.int64), 0, ncell[: window.dim] - 1
        )
    cell_id = (coords[:, 0] * ncell[1] + coords[:, 1]) * ncell[2] + coords[:, 2]
    order = np.argsort(cell_id, kind="stable")
    counts = np.bincount(cell_id, minlength=int(np.prod(ncell)))
    cell_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return GridIndex(ncell, cell_start, order, width)
