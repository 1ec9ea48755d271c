from .normal_estimator import NormalEstimator, NormalField, auto_radius, estimate_normals
from .orientation import orient_normals

__all__ = ['NormalEstimator', 'NormalField', 'auto_radius', 'estimate_normals', 'orient_normals']
