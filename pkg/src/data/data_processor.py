import numpy as np
import logging

from src.config import load_config
from src.data.point_cloud import BoundingCube, PointCloud
from src.errors import DataError

logger = logging.getLogger(__name__)


class CloudProcessor:
    """Geometry preprocessing: bounding cube, voxelization, unit normalization"""

    def __init__(self, degenerate_side=None):
        if degenerate_side is None:
            degenerate_side = load_config()['geometry']['degenerate_side']
        self.degenerate_side = float(degenerate_side)

    def bounding_cube(self, cloud):
        """Cube at the per-axis minimum whose side is the largest per-axis extent"""
        if len(cloud) == 0:
            raise DataError("bounding cube of an empty cloud")

        origin = cloud.points.min(axis=0)
        side = float((cloud.points.max(axis=0) - origin).max())
        if side == 0:
            logger.warning(f"All {len(cloud)} points coincide; using side {self.degenerate_side}")
            side = self.degenerate_side

        return BoundingCube(origin=origin, side=side)

    def voxelize(self, cloud, depth):
        """
        Quantize a cloud to the depth-bit integer grid

        Coordinates are mapped affinely from the bounding cube onto [0, 2^depth - 1]
        and rounded half-up. Points landing in the same voxel are merged; the first
        occurrence keeps its attributes and first-occurrence order is preserved.
        """
        depth = int(depth)
        if depth < 1:
            raise DataError(f"voxelization depth must be >= 1, got {depth}")
        if len(cloud) == 0:
            raise DataError("cannot voxelize an empty cloud")

        if cloud.voxelized and cloud.precision == depth:
            grid = cloud.points
        else:
            cube = self.bounding_cube(cloud)
            scale = (2 ** depth - 1) / cube.side
            grid = np.floor((cloud.points - cube.origin) * scale + 0.5)
            grid = np.clip(grid, 0, 2 ** depth - 1)

        _, first = np.unique(grid, axis=0, return_index=True)
        keep = np.sort(first)
        if len(keep) < len(cloud):
            logger.info(f"Voxelization merged {len(cloud) - len(keep)} duplicate points")

        return PointCloud(
            points=grid[keep],
            colors=cloud.colors[keep] if cloud.has_colors else None,
            normals=cloud.normals[keep] if cloud.has_normals else None,
            precision=depth,
            voxelized=True,
            normal_valid=cloud.normal_valid[keep] if cloud.normal_valid is not None else None,
        )

    def normalize_unit(self, cloud, precision=None):
        """Divide coordinates by P = 2^pr - 1; `precision` overrides the cloud's own pr"""
        precision = cloud.precision if precision is None else int(precision)
        if precision is None:
            raise DataError("normalization needs a precision; the cloud's is unknown")
        if precision < 1:
            raise DataError(f"precision must be >= 1, got {precision}")

        peak = float(2 ** precision - 1)
        return PointCloud(
            points=cloud.points / peak,
            colors=cloud.colors,
            normals=cloud.normals,
            precision=None,
            voxelized=False,
            normal_valid=cloud.normal_valid,
        )

    @staticmethod
    def point_count_ratio(reference, degraded):
        """|degraded| / |reference|"""
        if len(reference) == 0:
            raise DataError("point count ratio with an empty reference")
        return len(degraded) / len(reference)

