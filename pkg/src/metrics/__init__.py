from .geometry_metrics import (DirectionalErrors, MetricOptions, compare, parse_families,
                               pl2plane_errors, po2plane_errors, po2point_errors)
from .pooling import error_histogram, pool_angular, pool_haus, pool_mse, psnr_db
from .report import MetricReport

__all__ = [
    'DirectionalErrors', 'MetricOptions', 'MetricReport', 'compare', 'parse_families',
    'po2point_errors', 'po2plane_errors', 'pl2plane_errors',
    'pool_mse', 'pool_haus', 'pool_angular', 'psnr_db', 'error_histogram',
]
