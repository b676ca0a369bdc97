"""Geometry of spatial locations: distances, maximin ordering, neighbor sets."""

from dataclasses import dataclass

import numpy as np

from ._accel import _maximin_order, _predecessor_neighbors


def as_locations(points) -> np.ndarray:
    """Validate and return an (n, p) float64 coordinate array.

    Accepts any array-like of n points sharing one dimension (typically 2 or
    3). Duplicate coordinates are allowed; NaN or infinite coordinates are
    rejected.
    """
    locs = np.asarray(points, dtype=np.float64)
    if locs.ndim != 2 or locs.shape[0] < 1 or locs.shape[1] < 1:
        raise ValueError(f"locations must be a nonempty (n, p) array, got shape {locs.shape}")
    if not np.all(np.isfinite(locs)):
        raise ValueError("locations contain NaN or infinite coordinates")
    return locs


@dataclass
class MaximinOrdering:
    """A maximin permutation plus predecessor nearest-neighbor sets.

    ``order[r]`` is the original index of the rank-r location. ``neighbors`` is
    (n, m) int64 padded with -1; row r lists the ranks (all < r) of the
    min(m, r) nearest previously-ordered locations, closest first.
    """

    order: np.ndarray
    neighbors: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return self.order.shape[0]

    def neighbor_counts(self) -> np.ndarray:
        return np.minimum(self.m, np.arange(self.n, dtype=np.int64))

    def neighbor_sets(self) -> list:
        lens = self.neighbor_counts()
        return [self.neighbors[i, : lens[i]].copy() for i in range(self.n)]


def pairwise_distances(locs) -> np.ndarray:
    """Symmetric matrix of Euclidean distances between all location pairs."""
    pts = as_locations(locs)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    return d


def maximin_order(locs) -> np.ndarray:
    """Maximin permutation of the locations (0-based original indices).

    The first point is the one nearest the coordinate centroid; each later
    point maximizes its minimum distance to the points already ordered.
    Distance ties break toward the lowest original index.
    """
    pts = as_locations(locs)
    return _maximin_order(np.ascontiguousarray(pts))


def predecessor_neighbors(ordered_locs, m: int) -> np.ndarray:
    """Nearest previously-ordered neighbor sets for maximin-ordered locations.

    Returns an (n, m) int64 array padded with -1: row i holds the ranks of the
    min(m, i) nearest predecessors of rank i, sorted by increasing distance
    with ties broken by lower rank.
    """
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    pts = as_locations(ordered_locs)
    return _predecessor_neighbors(np.ascontiguousarray(pts), int(m))


def build_ordering(locs, m: int) -> MaximinOrdering:
    """Maximin-order the locations and attach their predecessor neighbor sets."""
    pts = as_locations(locs)
    order = maximin_order(pts)
    neighbors = predecessor_neighbors(pts[order], m)
    return MaximinOrdering(order=order, neighbors=neighbors, m=int(m))
