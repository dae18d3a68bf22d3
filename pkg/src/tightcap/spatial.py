"""Spatial queries over vertex sets: exact KNN and double-cone lookups.

Both queries are exact (equal to exhaustive search). KNN uses a KD-tree to
shortlist candidates, then re-ranks them with the same squared-distance
arithmetic an exhaustive oracle would use, so ties resolve identically
(by lower vertex id).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class SpatialIndex:
    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
            raise ValueError(f"points must be non-empty (n, 3), got {points.shape}")
        self.points = points
        self._tree = cKDTree(points)

    def knn_query(self, query: np.ndarray, k: int) -> np.ndarray:
        """Indices of the k nearest points, ascending by (distance, id).

        k is clamped to the point count. Ties at the cutoff distance are
        broken toward lower ids, exactly as a full (d^2, id) sort would.
        """
        query = np.asarray(query, dtype=np.float64).reshape(3)
        n = len(self.points)
        k = min(int(k), n)
        if k <= 0:
            return np.zeros(0, dtype=np.int64)
        d, _ = self._tree.query(query, k=k)
        dk = float(np.max(d))
        # all true k-nearest lie within dk; inflate for ulp safety and
        # re-rank exactly
        radius = dk * (1.0 + 1e-9) + 1e-300
        cand = np.array(self._tree.query_ball_point(query, radius), dtype=np.int64)
        d2 = ((self.points[cand] - query) ** 2).sum(axis=1)
        order = np.lexsort((cand, d2))
        return cand[order[:k]]

    def nearest(self, queries: np.ndarray, k: int = 1,
                max_distance: float = np.inf):
        """Batched plain kNN: (distances, indices), both (n, k).

        No exact tie re-ranking (see knn_query for that); k is clamped to
        the point count. With a finite `max_distance`, entries farther than
        it come back as (inf, n) -- callers must mask before indexing.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        k = min(int(k), len(self.points))
        d, i = self._tree.query(queries, k=k, distance_upper_bound=max_distance)
        if k == 1:
            d, i = d[:, None], i[:, None]
        return d, i.astype(np.int64)

    def cone_query(self, origin: np.ndarray, axis: np.ndarray,
                   aperture_deg: float) -> np.ndarray:
        """Ids inside the symmetric double cone around +-axis.

        A point is inside when the angle between (p - origin) and axis, or
        between (p - origin) and -axis, is at most aperture_deg / 2.
        Points coincident with the origin are excluded. Returns ascending ids.
        """
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        axis = np.asarray(axis, dtype=np.float64).reshape(3)
        ln = np.linalg.norm(axis)
        if ln == 0:
            raise ValueError("cone axis must be nonzero")
        axis = axis / ln
        half = np.deg2rad(float(aperture_deg)) / 2.0
        u = self.points - origin
        d2 = (u * u).sum(axis=1)
        nonzero = d2 > 0
        if half >= np.pi / 2:
            # the two half-cones jointly cover every direction
            return np.nonzero(nonzero)[0].astype(np.int64)
        c = np.cos(half)
        dots = u @ axis
        inside = nonzero & (np.abs(dots) >= c * np.sqrt(d2))
        return np.nonzero(inside)[0].astype(np.int64)
