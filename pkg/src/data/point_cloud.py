from dataclasses import dataclass, field

import numpy as np

from src.errors import DataError

NORMAL_TOLERANCE = 1e-6


def _frozen_array(values, dtype, name):
    array = np.array(values, dtype=dtype, copy=True)
    if array.ndim != 2 or array.shape[1] != 3:
        raise DataError(f"{name} must have shape (N, 3), got {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PointCloud:
    """
    Immutable point cloud

    Attributes:
        points: (N, 3) float64 coordinates in grid units of the source
        colors: optional (N, 3) uint8 RGB, one row per point
        normals: optional (N, 3) float64 unit vectors, one row per point
        normal_valid: optional (N,) bool mask over normals; None means every normal is usable
        precision: coordinate bit depth pr (grid is [0, 2^pr - 1]); None when unknown
        voxelized: True when coordinates are integral grid positions for `precision`
    """
    points: np.ndarray
    colors: np.ndarray = None
    normals: np.ndarray = None
    precision: int = None
    voxelized: bool = False
    normal_valid: np.ndarray = None

    def __post_init__(self):
        points = _frozen_array(self.points, np.float64, 'points')
        object.__setattr__(self, 'points', points)

        if self.colors is not None:
            colors = _frozen_array(self.colors, np.uint8, 'colors')
            if len(colors) != len(points):
                raise DataError(f"colors has {len(colors)} rows for {len(points)} points")
            object.__setattr__(self, 'colors', colors)

        if self.normals is not None:
            normals = _frozen_array(self.normals, np.float64, 'normals')
            if len(normals) != len(points):
                raise DataError(f"normals has {len(normals)} rows for {len(points)} points")
            lengths = np.linalg.norm(normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOLERANCE):
                raise DataError("every stored normal must have unit length")
            object.__setattr__(self, 'normals', normals)

        if self.normal_valid is not None:
            if self.normals is None:
                raise DataError("normal_valid needs normals")
            mask = np.array(self.normal_valid, dtype=bool, copy=True).reshape(-1)
            if len(mask) != len(points):
                raise DataError(f"normal_valid has {len(mask)} rows for {len(points)} points")
            mask.setflags(write=False)
            object.__setattr__(self, 'normal_valid', mask)

        if self.precision is not None:
            precision = int(self.precision)
            if precision < 1:
                raise DataError(f"precision must be >= 1, got {precision}")
            object.__setattr__(self, 'precision', precision)

        if self.voxelized:
            if self.precision is None:
                raise DataError("a voxelized cloud needs a precision")
            if len(points) and not is_on_grid(points, self.precision):
                raise DataError(f"voxelized cloud has coordinates off the {self.precision}-bit grid")

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (
            self.precision == other.precision
            and self.voxelized == other.voxelized
            and np.array_equal(self.points, other.points)
            and _optional_equal(self.colors, other.colors)
            and _optional_equal(self.normals, other.normals)
            and _optional_equal(self.normal_valid, other.normal_valid)
        )

    __hash__ = None

    @property
    def has_colors(self):
        return self.colors is not None

    @property
    def has_normals(self):
        return self.normals is not None

    @property
    def peak(self):
        """Peak value P = 2^pr - 1"""
        if self.precision is None:
            raise DataError("cloud precision is unknown; supply it explicitly")
        return float(2 ** self.precision - 1)

    def replace(self, **changes):
        """Copy with some fields replaced"""
        values = {
            'points': self.points,
            'colors': self.colors,
            'normals': self.normals,
            'precision': self.precision,
            'voxelized': self.voxelized,
            'normal_valid': self.normal_valid,
        }
        if 'normals' in changes and 'normal_valid' not in changes:
            values['normal_valid'] = None
        values.update(changes)
        return PointCloud(**values)


@dataclass(frozen=True)
class BoundingCube:
    """Axis-aligned cube; origin is the per-axis minimum corner"""
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    side: float = 1.0

    def __post_init__(self):
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        origin.setflags(write=False)
        object.__setattr__(self, 'origin', origin)
        if not self.side > 0:
            raise DataError(f"bounding cube side must be positive, got {self.side}")
        object.__setattr__(self, 'side', float(self.side))

    def contains(self, points):
        points = np.asarray(points, dtype=np.float64)
        return bool(np.all(points >= self.origin) and np.all(points <= self.origin + self.side))


def is_on_grid(points, precision):
    """True when every coordinate is an integer in [0, 2^precision - 1]"""
    points = np.asarray(points)
    if not np.all(np.isfinite(points)):
        return False
    return bool(
        np.all(points == np.round(points))
        and points.min() >= 0
        and points.max() <= 2 ** precision - 1
    )


def minimum_precision(points):
    """Smallest pr with 2^pr - 1 >= max coordinate, or None for non-integral/negative clouds"""
    points = np.asarray(points)
    if len(points) == 0 or not np.all(np.isfinite(points)):
        return None
    if not np.all(points == np.round(points)) or points.min() < 0:
        return None
    max_coord = int(points.max())
    precision = max(1, max_coord.bit_length())
    return precision


def _optional_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)
