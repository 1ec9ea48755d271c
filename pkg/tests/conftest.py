import numpy as np
import pytest

from src.data.ply_io import write_ply
from src.data.point_cloud import PointCloud


def fibonacci_sphere(n, radius=1.0, centre=(0.0, 0.0, 0.0)):
    """Near-uniform points on a sphere"""
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    azimuth = np.pi * (1 + 5 ** 0.5) * i
    unit = np.column_stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)])
    return np.asarray(centre) + radius * unit, unit


def plane_grid(size=20, z=5.0, origin=(0.0, 0.0)):
    x, y = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing='ij')
    return np.column_stack([x.ravel() + origin[0], y.ravel() + origin[1], np.full(size * size, z)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def voxel_cloud(rng):
    """500 distinct integer points on the 10-bit grid, with colours"""
    points = np.unique(rng.integers(0, 1024, size=(600, 3)), axis=0)[:500]
    points = rng.permutation(points).astype(np.float64)
    colors = rng.integers(0, 256, size=(len(points), 3))
    return PointCloud(points=points, colors=colors, precision=10, voxelized=True)


@pytest.fixture
def plane_cloud():
    return PointCloud(points=plane_grid(), precision=5, voxelized=True)


@pytest.fixture
def sphere_cloud():
    points, _ = fibonacci_sphere(2000, radius=100.0)
    return PointCloud(points=points)


@pytest.fixture
def sphere_with_normals():
    points, normals = fibonacci_sphere(800, radius=200.0, centre=(400.0, 400.0, 400.0))
    return PointCloud(points=points, normals=normals)


@pytest.fixture
def ply_file(tmp_path):
    """Write a cloud to a temporary PLY file and return the path"""
    def write(cloud, name='cloud.ply', format='binary_le'):
        path = str(tmp_path / name)
        write_ply(cloud, path, format=format)
        return path
    return write
