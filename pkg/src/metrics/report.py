import json
import math
import os
from dataclasses import dataclass

from src.errors import DataError

SCHEMA_VERSION = 1
IDENTICAL = 'identical'
DIRECTIONS = ('R->T', 'T->R')
FAMILIES = ('po2point', 'po2plane', 'pl2plane')

# Flat metric names used in score tables, mapped to (family, key)
METRIC_FIELDS = {
    'po2point_mse': ('po2point', 'mse'),
    'po2point_haus': ('po2point', 'haus'),
    'po2point_psnr': ('po2point', 'psnr_db'),
    'po2plane_mse': ('po2plane', 'mse'),
    'po2plane_haus': ('po2plane', 'haus'),
    'po2plane_psnr': ('po2plane', 'psnr_db'),
    'pl2plane_mad': ('pl2plane', 'mad'),
    'pl2plane_msad': ('pl2plane', 'msad'),
    'pl2plane_rmsad': ('pl2plane', 'rmsad'),
}


@dataclass
class MetricReport:
    """
    Full-reference geometry scores for one (reference, degraded) pair

    Each family dict holds the symmetric values plus `directions` (per-direction
    values) and, for normal-based families, `skipped` counts. Families that were
    not requested are None.
    """
    num_points_ratio: float
    peak: float
    precision: int
    normalized: bool = True
    po2point: dict = None
    po2plane: dict = None
    pl2plane: dict = None

    def to_dict(self):
        return {
            'schema': SCHEMA_VERSION,
            'precision': self.precision,
            'peak': self.peak,
            'normalized': self.normalized,
            'num_points_ratio': self.num_points_ratio,
            'po2point': _encode(self.po2point),
            'po2plane': _encode(self.po2plane),
            'pl2plane': _encode(self.pl2plane),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def write_json(self, path):
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, 'w') as f:
            f.write(self.to_json() + '\n')

    @classmethod
    def from_dict(cls, data):
        if data.get('schema') != SCHEMA_VERSION:
            raise DataError(f"unsupported report schema {data.get('schema')!r}")
        return cls(
            num_points_ratio=data['num_points_ratio'],
            peak=data['peak'],
            precision=data['precision'],
            normalized=data['normalized'],
            po2point=_decode(data['po2point']),
            po2plane=_decode(data['po2plane']),
            pl2plane=_decode(data['pl2plane']),
        )

    def flat(self):
        """Symmetric scores keyed by flat metric name, for the families present"""
        values = {'num_points_ratio': self.num_points_ratio}
        for name, (family, key) in METRIC_FIELDS.items():
            block = getattr(self, family)
            if block is not None:
                values[name] = block[key]
        return values


def _encode(value):
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, float) and math.isinf(value) and value > 0:
        return IDENTICAL
    return value


def _decode(value):
    if isinstance(value, dict):
        return {k: _decode(v) for k, v in value.items()}
    if value == IDENTICAL:
        return float('inf')
    return value
