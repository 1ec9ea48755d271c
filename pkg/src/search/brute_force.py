import numpy as np

from src.errors import DataError

BLOCK_SIZE = 512


def squared_distances(points, queries):
    """
    Exact squared distances, componentwise in a fixed order

    points: (..., 3); queries broadcastable against it. Both the k-d tree index
    and the brute-force oracle use this so results compare bit for bit.
    """
    d = points - queries
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


class BruteForceIndex:
    """Exhaustive O(N*M) reference for SpatialIndex, processed in blocks"""

    def __init__(self, points):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
            raise DataError("brute-force index needs a non-empty (N, 3) array")
        self.points = points
        self.source_size = len(points)

    def _blocks(self, queries):
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        for start in range(0, len(queries), BLOCK_SIZE):
            block = queries[start:start + BLOCK_SIZE]
            yield block, squared_distances(self.points[None, :, :], block[:, None, :])

    def nearest_many(self, queries):
        indices, dists = [], []
        for _, d2 in self._blocks(queries):
            # argmin returns the first (lowest) index among equal minima
            best = np.argmin(d2, axis=1)
            indices.append(best)
            dists.append(d2[np.arange(len(best)), best])
        return np.concatenate(indices).astype(np.int64), np.concatenate(dists)

    def k_nearest_many(self, queries, k):
        k = min(int(k), self.source_size)
        ids = np.arange(self.source_size)
        indices, dists = [], []
        for _, d2 in self._blocks(queries):
            order = np.lexsort((np.broadcast_to(ids, d2.shape), d2), axis=-1)[:, :k]
            indices.append(order)
            dists.append(np.take_along_axis(d2, order, axis=1))
        return np.concatenate(indices).astype(np.int64), np.concatenate(dists)

    def radius_search(self, query, radius):
        d2 = squared_distances(self.points, np.asarray(query, dtype=np.float64).reshape(1, 3))
        hits = np.flatnonzero(d2 <= radius * radius)
        order = np.lexsort((hits, d2[hits]))
        return hits[order].astype(np.int64), d2[hits][order]
