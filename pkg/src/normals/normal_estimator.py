import logging
from dataclasses import dataclass, field

import numpy as np

from src.config import load_config
from src.errors import DataError, NormalEstimationError
from src.normals.orientation import orient_normals
from src.search.spatial_index import SpatialIndex

logger = logging.getLogger(__name__)

# Exported in place of normals that could not be estimated
PLACEHOLDER_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class NormalField:
    """
    Per-point normals with a validity mask

    Invalid rows (rank-deficient neighbourhoods) hold zeros.
    """
    normals: np.ndarray
    valid_mask: np.ndarray
    radius: float
    seed_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    oriented: bool = False

    def __len__(self):
        return len(self.normals)

    @property
    def valid_count(self):
        return int(self.valid_mask.sum())

    @classmethod
    def from_cloud(cls, cloud):
        """Wrap normals already stored on a cloud; rows flagged in cloud.normal_valid are excluded"""
        if not cloud.has_normals:
            raise DataError("cloud has no normals")
        if cloud.normal_valid is None:
            valid_mask = np.ones(len(cloud), dtype=bool)
        else:
            valid_mask = np.array(cloud.normal_valid, dtype=bool)
        return cls(normals=cloud.normals, valid_mask=valid_mask,
                   radius=float('nan'), oriented=True)


class NormalEstimator:
    """
    PCA normals over a fixed-radius neighbourhood

    The radius defaults to radius_multiplier times the mean distance to the nearest
    distinct neighbour. Neighbourhoods with fewer than 3 points fall back to the
    knn_fallback nearest neighbours.
    """

    def __init__(self, radius_multiplier=None, sample_size=None, knn_fallback=None,
                 collinearity_tolerance=None, chunk_size=None, orientation_k=None):
        params = load_config()['normals']
        self.radius_multiplier = radius_multiplier if radius_multiplier is not None else params['radius_multiplier']
        self.sample_size = sample_size or params['radius_sample_size']
        self.knn_fallback = knn_fallback or params['knn_fallback']
        self.collinearity_tolerance = (
            collinearity_tolerance if collinearity_tolerance is not None else params['collinearity_tolerance']
        )
        self.chunk_size = chunk_size or params['chunk_size']
        self.orientation_k = orientation_k or params['orientation_k']

        if self.radius_multiplier <= 0:
            raise DataError(f"radius multiplier must be positive, got {self.radius_multiplier}")

    def auto_radius(self, cloud, index=None):
        """radius_multiplier x mean nearest-distinct-neighbour distance over a stride sample"""
        n = len(cloud)
        if n < 2:
            raise DataError(f"automatic radius needs at least 2 points, got {n}")
        index = index or SpatialIndex.build(cloud)

        step = -(-n // self.sample_size)
        sample = cloud.points[::step][:self.sample_size]

        nearest = np.zeros(len(sample))
        pending = np.arange(len(sample))
        k = 2
        while len(pending):
            _, d2 = index.k_nearest_many(sample[pending], k)
            positive = d2 > 0
            found = positive.any(axis=1)
            first = np.argmax(positive, axis=1)
            nearest[pending[found]] = np.sqrt(d2[found, first[found]])
            pending = pending[~found]
            if len(pending) and k >= n:
                raise NormalEstimationError("all points coincide; no distinct neighbour exists")
            k = min(2 * k, n)

        radius = float(self.radius_multiplier * nearest.mean())
        logger.info(f"Automatic normal radius {radius:.6g} from {len(sample)} sampled points")
        return radius

    def estimate(self, cloud, radius=None, index=None):
        """
        Unoriented normals: eigenvector of the smallest covariance eigenvalue

        Returns:
            NormalField with invalid rows zeroed and flagged in valid_mask
        """
        n = len(cloud)
        if n == 0:
            raise DataError("cannot estimate normals of an empty cloud")
        index = index or SpatialIndex.build(cloud)
        if radius is None:
            radius = self.auto_radius(cloud, index=index)
        if not radius > 0:
            raise DataError(f"normal radius must be positive, got {radius}")

        normals = np.zeros((n, 3))
        valid = np.zeros(n, dtype=bool)
        for start in range(0, n, self.chunk_size):
            stop = min(start + self.chunk_size, n)
            normals[start:stop], valid[start:stop] = self._estimate_chunk(cloud.points, index, start, stop, radius)

        invalid = n - int(valid.sum())
        if invalid:
            logger.warning(f"{invalid} of {n} points have rank-deficient neighbourhoods; normals invalid")
        logger.info(f"Estimated {n - invalid} normals with radius {radius:.6g}")
        return NormalField(normals=normals, valid_mask=valid, radius=float(radius))

    def calculate(self, cloud, radius=None, orient=True):
        """
        Estimate (and optionally orient) normals and attach them to the cloud

        Returns:
            (cloud with normals, NormalField); invalid rows are exported as +z and
            flagged false in the cloud's normal_valid mask
        """
        index = SpatialIndex.build(cloud)
        normal_field = self.estimate(cloud, radius=radius, index=index)
        if orient:
            normal_field = orient_normals(cloud, normal_field, k=self.orientation_k)

        exported = normal_field.normals.copy()
        exported[~normal_field.valid_mask] = PLACEHOLDER_NORMAL
        return cloud.replace(normals=exported, normal_valid=normal_field.valid_mask), normal_field

    def _estimate_chunk(self, points, index, start, stop, radius):
        queries = points[start:stop]
        m = len(queries)
        rows, cols = index.radius_pairs(queries, radius)

        counts = np.bincount(rows, minlength=m)
        sparse = np.flatnonzero(counts < 3)
        if len(sparse):
            knn, _ = index.k_nearest_many(queries[sparse], self.knn_fallback)
            keep = counts[rows] >= 3
            rows = np.concatenate([rows[keep], np.repeat(sparse, knn.shape[1])])
            cols = np.concatenate([cols[keep], knn.ravel()])
            counts = np.bincount(rows, minlength=m)

        # centred on the query point for conditioning
        d = points[cols] - queries[rows]
        sizes = counts.astype(np.float64)
        safe = np.maximum(sizes, 1.0)
        mean = np.column_stack([np.bincount(rows, weights=d[:, a], minlength=m) for a in range(3)]) / safe[:, None]

        cov = np.empty((m, 3, 3))
        for a in range(3):
            for b in range(a, 3):
                second = np.bincount(rows, weights=d[:, a] * d[:, b], minlength=m) / safe
                cov[:, a, b] = cov[:, b, a] = second - mean[:, a] * mean[:, b]

        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        normals = eigenvectors[:, :, 0]
        largest = eigenvalues[:, 2]
        valid = (counts >= 3) & (largest > 0) & (eigenvalues[:, 1] > self.collinearity_tolerance * largest)

        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        normals[~valid] = 0.0
        return normals, valid


def auto_radius(cloud, multiplier=None):
    return NormalEstimator(radius_multiplier=multiplier).auto_radius(cloud)


def estimate_normals(cloud, radius=None):
    return NormalEstimator().estimate(cloud, radius=radius)
