"""Reweighted K-function estimation."""

from .estimator import (
    KEstimate,
    KGrid,
    estimate_k,
    estimate_k_many,
    estimate_k_naive,
    relative_k,
)
from .index import GridIndex, build_spatial_index

__all__ = [
    "GridIndex",
    "KEstimate",
    "KGrid",
    "build_spatial_index",
    "estimate_k",
    "estimate_k_many",
    "estimate_k_naive",
    "relative_k",
]
