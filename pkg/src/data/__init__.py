from .point_cloud import PointCloud, BoundingCube
from .ply_io import read_ply, write_ply
from .data_processor import CloudProcessor
from .data_loader import DataLoader, ScorePairSet

__all__ = ['PointCloud', 'BoundingCube', 'read_ply', 'write_ply', 'CloudProcessor', 'DataLoader', 'ScorePairSet']
