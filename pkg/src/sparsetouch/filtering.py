"""Feasibility filtering of candidate sensor sites.

Two independent geometric filters: a margin exclusion strip along the two
rigidly supported edges (v = 0 and v = v_max on the unfolded surface), and
a k-nearest-neighbour center-of-mass test that knocks out sites on the
edge of the point cloud, where a physical gauge could not sit flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class FilterConfig:
    """k_neighbors nearest sites form the neighbourhood; a site survives the
    CoM test iff the neighbourhood centroid stays within com_radius (mm).
    support_margin (mm) is the exclusion distance from the supported edges."""

    k_neighbors: int = 8
    com_radius: float = 1.0
    support_margin: float = 10.0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValidationError(f"k_neighbors must be >= 1: {self.k_neighbors}")
        if not self.com_radius > 0:
            raise ValidationError(f"com_radius must be positive: {self.com_radius}")
        if self.support_margin < 0 or not math.isfinite(self.support_margin):
            raise ValidationError(f"support_margin must be finite and >= 0: {self.support_margin}")

    def to_dict(self) -> dict:
        return {
            "k_neighbors": self.k_neighbors,
            "com_radius": self.com_radius,
            "support_margin": self.support_margin,
        }


def default_com_radius(sites) -> float:
    """0.15 x the median nearest-neighbour spacing ("grid pitch")."""
    sites = np.asarray(sites, dtype=float)
    d = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    return 0.15 * float(np.median(d.min(axis=1)))


def margin_filter(sites, config: FilterConfig, v_support: tuple[float, float] | None = None) -> np.ndarray:
    """Indices of sites farther than support_margin from both supported edges.

    The supported edges run along v = v_lo and v = v_hi; when ``v_support``
    is not given they default to the extremes of the site cloud itself.
    """
    sites = np.asarray(sites, dtype=float)
    if sites.size == 0:
        raise ValidationError("sites must be non-empty")
    if v_support is None:
        v_support = (float(sites[:, 1].min()), float(sites[:, 1].max()))
    v_lo, v_hi = v_support
    v = sites[:, 1]
    keep = ((v - v_lo) > config.support_margin) & ((v_hi - v) > config.support_margin)
    return np.flatnonzero(keep)


def com_filter(sites, config: FilterConfig) -> np.ndarray:
    """Indices of sites whose k-NN centroid lies within com_radius.

    Neighbourhoods exclude the site itself; distance ties are broken by
    site index so the result is deterministic.  ``com_radius = inf`` keeps
    everything.
    """
    sites = np.asarray(sites, dtype=float)
    n = len(sites)
    if n <= config.k_neighbors:
        raise ValidationError(
            f"need more than k_neighbors={config.k_neighbors} sites, got {n}"
        )
    if math.isinf(config.com_radius):
        return np.arange(n)

    diff = sites[:, None, :] - sites[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    keep = np.empty(n, dtype=bool)
    idx = np.arange(n)
    for i in range(n):
        others = idx != i
        order = np.lexsort((idx[others], dist[i, others]))
        neigh = sites[others][order[: config.k_neighbors]]
        centroid = neigh.mean(axis=0)
        keep[i] = np.linalg.norm(sites[i] - centroid) <= config.com_radius
    return np.flatnonzero(keep)


def filter_pipeline(sites, config: FilterConfig, v_support: tuple[float, float] | None = None) -> np.ndarray:
    """Intersection of the margin and CoM filters (order-independent)."""
    kept_margin = set(margin_filter(sites, config, v_support).tolist())
    kept_com = set(com_filter(sites, config).tolist())
    return np.array(sorted(kept_margin & kept_com), dtype=int)
