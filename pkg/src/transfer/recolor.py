import logging

import numpy as np

from src.errors import DataError
from src.search.spatial_index import SpatialIndex

logger = logging.getLogger(__name__)


def recolor(reference, degraded, k=1, index=None):
    """
    Give each degraded point the colour of its nearest reference point

    With k > 1 the colour is the rounded mean over the k nearest reference points.
    Geometry, precision and normals of the degraded cloud are kept.
    """
    if not reference.has_colors:
        raise DataError("reference cloud has no colours to transfer")
    if len(reference) == 0:
        raise DataError("reference cloud is empty")
    k = int(k)
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(degraded) == 0:
        return degraded.replace(colors=np.empty((0, 3), dtype=np.uint8))

    index = index or SpatialIndex.build(reference)
    if k == 1:
        nearest, _ = index.nearest_many(degraded.points)
        colors = reference.colors[nearest]
    else:
        neighbours, _ = index.k_nearest_many(degraded.points, k)
        mean = reference.colors[neighbours].astype(np.float64).mean(axis=1)
        # half-up rounding of non-negative means
        colors = np.clip(np.floor(mean + 0.5), 0, 255).astype(np.uint8)

    logger.info(f"Recolored {len(degraded)} points from {len(reference)} reference points (k={k})")
    return degraded.replace(colors=colors)
