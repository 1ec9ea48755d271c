import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from src.config import thread_count
from src.errors import DataError
from src.search.brute_force import squared_distances

logger = logging.getLogger(__name__)

# Relative slack used to detect near-ties that the tree's own rounding could misorder
TIE_TOLERANCE = 1e-9
BALL_SLACK = 1e-6
ABSOLUTE_SLACK = 1e-12


@dataclass(frozen=True)
class Correspondence:
    """Nearest-neighbour matches from a query cloud into an indexed cloud"""
    source_index: np.ndarray
    target_index: np.ndarray
    error_vector: np.ndarray
    squared_distance: np.ndarray

    def __len__(self):
        return len(self.source_index)


class SpatialIndex:
    """
    Exact nearest-neighbour queries over a fixed point set

    Candidates come from a scipy cKDTree; their distances are recomputed with the
    brute-force formula and boundary near-ties are settled by a ball query, so
    every result equals the exhaustive search, lowest index first on ties.
    """

    def __init__(self, points, workers=None):
        points = np.array(points, dtype=np.float64, copy=True)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DataError(f"spatial index needs an (N, 3) array, got {points.shape}")
        if len(points) == 0:
            raise DataError("cannot build a spatial index over an empty cloud")
        points.setflags(write=False)

        self.points = points
        self.source_size = len(points)
        self.workers = workers or thread_count()
        self.tree = cKDTree(points, balanced_tree=True, compact_nodes=True)

    @classmethod
    def build(cls, cloud, workers=None):
        return cls(cloud.points, workers=workers)

    def nearest(self, query):
        """(index, squared distance) of the closest point"""
        indices, dists = self.nearest_many(np.asarray(query, dtype=np.float64).reshape(1, 3))
        return int(indices[0]), float(dists[0])

    def k_nearest(self, query, k):
        indices, dists = self.k_nearest_many(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
        return indices[0], dists[0]

    def nearest_many(self, queries):
        """
        Closest indexed point for every query row

        Returns:
            (indices int64 (M,), squared distances float64 (M,))
        """
        queries = self._as_queries(queries)
        if len(queries) == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)

        if self.source_size == 1:
            indices = np.zeros(len(queries), dtype=np.int64)
            return indices, squared_distances(self.points[indices], queries)

        indices, d2 = self._candidates(queries, 2)
        best_d2 = d2[:, 0]
        ambiguous = np.flatnonzero(d2[:, 1] <= best_d2 * (1 + TIE_TOLERANCE) + ABSOLUTE_SLACK)

        best = indices[:, 0].copy()
        best_d2 = best_d2.copy()
        if len(ambiguous):
            rows, rank, hits, hit_d2 = self._ball_ranks(queries[ambiguous], best_d2[ambiguous])
            first = rank == 0
            best[ambiguous[rows[first]]] = hits[first]
            best_d2[ambiguous[rows[first]]] = hit_d2[first]
        return best, best_d2

    def k_nearest_many(self, queries, k):
        """
        min(k, N) closest points per query, ascending by (distance, index)

        Returns:
            (indices int64 (M, k'), squared distances float64 (M, k'))
        """
        k = int(k)
        if k < 1:
            raise DataError(f"k must be >= 1, got {k}")
        queries = self._as_queries(queries)
        k = min(k, self.source_size)
        if len(queries) == 0:
            return np.empty((0, k), dtype=np.int64), np.empty((0, k))

        fetched = min(k + 1, self.source_size)
        indices, d2 = self._candidates(queries, fetched)
        if fetched == k:
            return indices, d2

        kth = d2[:, k - 1]
        ambiguous = np.flatnonzero(d2[:, k] <= kth * (1 + TIE_TOLERANCE) + ABSOLUTE_SLACK)
        indices, d2 = indices[:, :k].copy(), d2[:, :k].copy()
        if len(ambiguous):
            logger.debug(f"Resolving {len(ambiguous)} boundary ties for k={k}")
            rows, rank, hits, hit_d2 = self._ball_ranks(queries[ambiguous], kth[ambiguous])
            top = rank < k
            indices[ambiguous[rows[top]], rank[top]] = hits[top]
            d2[ambiguous[rows[top]], rank[top]] = hit_d2[top]
        return indices, d2

    def radius_search(self, query, radius):
        """Every point with distance <= radius, ascending by (distance, index)"""
        query = np.asarray(query, dtype=np.float64).reshape(1, 3)
        if radius < 0:
            raise DataError(f"radius must be non-negative, got {radius}")
        hits = np.asarray(
            self.tree.query_ball_point(query[0], radius * (1 + BALL_SLACK) + ABSOLUTE_SLACK),
            dtype=np.int64,
        )
        d2 = squared_distances(self.points[hits], query)
        keep = d2 <= radius * radius
        hits, d2 = hits[keep], d2[keep]
        order = np.lexsort((hits, d2))
        return hits[order], d2[order]

    def radius_pairs(self, queries, radius):
        """
        Flat (query_row, point_index) pairs for every point within radius

        Pairs are grouped by query row, ascending by index within a row.
        """
        queries = self._as_queries(queries)
        balls = self.tree.query_ball_point(
            queries, radius * (1 + BALL_SLACK) + ABSOLUTE_SLACK,
            workers=self.workers, return_sorted=True,
        )
        counts = np.fromiter((len(b) for b in balls), dtype=np.int64, count=len(balls))
        if counts.sum() == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

        rows = np.repeat(np.arange(len(queries), dtype=np.int64), counts)
        cols = np.concatenate([np.asarray(b, dtype=np.int64) for b in balls if len(b)])
        keep = squared_distances(self.points[cols], queries[rows]) <= radius * radius
        return rows[keep], cols[keep]

    def correspond(self, queries):
        """Nearest match for each query point; error_vector = matched - query"""
        queries = self._as_queries(queries)
        target, d2 = self.nearest_many(queries)
        return Correspondence(
            source_index=np.arange(len(queries), dtype=np.int64),
            target_index=target,
            error_vector=self.points[target] - queries,
            squared_distance=d2,
        )

    def _as_queries(self, queries):
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if queries.shape[1] != 3:
            raise DataError(f"queries must have shape (M, 3), got {queries.shape}")
        return queries

    def _candidates(self, queries, k):
        """Tree candidates re-ranked by exact distance, then index"""
        _, indices = self.tree.query(queries, k=k, workers=self.workers)
        indices = np.asarray(indices, dtype=np.int64).reshape(len(queries), k)
        d2 = squared_distances(self.points[indices], queries[:, None, :])
        order = np.lexsort((indices, d2), axis=-1)
        return np.take_along_axis(indices, order, axis=1), np.take_along_axis(d2, order, axis=1)

    def _ball_ranks(self, queries, bound_d2):
        """
        Every point with d2 close to or below bound, ranked per query row

        Returns flat arrays (row, rank, index, d2) where rank orders each row's
        hits by exact (distance, index).
        """
        limit = bound_d2 * (1 + TIE_TOLERANCE) + ABSOLUTE_SLACK
        radii = np.sqrt(limit) * (1 + BALL_SLACK) + ABSOLUTE_SLACK
        balls = self.tree.query_ball_point(queries, radii, workers=self.workers)
        counts = np.fromiter((len(b) for b in balls), dtype=np.int64, count=len(balls))
        rows = np.repeat(np.arange(len(queries), dtype=np.int64), counts)
        hits = np.concatenate([np.asarray(b, dtype=np.int64) for b in balls])
        d2 = squared_distances(self.points[hits], queries[rows])

        order = np.lexsort((hits, d2, rows))
        rows, hits, d2 = rows[order], hits[order], d2[order]
        rank = np.arange(len(rows)) - np.searchsorted(rows, rows, side='left')
        return rows, rank, hits, d2
