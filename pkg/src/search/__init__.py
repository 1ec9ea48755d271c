from .spatial_index import SpatialIndex, Correspondence
from .brute_force import BruteForceIndex, squared_distances

__all__ = ['SpatialIndex', 'Correspondence', 'BruteForceIndex', 'squared_distances']
