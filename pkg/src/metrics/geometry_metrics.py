import logging
from dataclasses import dataclass

import numpy as np

from src.config import load_config
from src.data.data_processor import CloudProcessor
from src.data.point_cloud import PointCloud
from src.errors import DataError, NumericError
from src.metrics.pooling import pool_angular, pool_haus, pool_mse, psnr_db
from src.metrics.report import DIRECTIONS, FAMILIES, MetricReport
from src.normals.normal_estimator import NormalEstimator, NormalField
from src.search.spatial_index import SpatialIndex

logger = logging.getLogger(__name__)

# Mean neighbour normals shorter than this cannot be projected on
MIN_NORMAL_LENGTH = 1e-12


@dataclass(frozen=True)
class DirectionalErrors:
    """
    Per-point errors for one direction

    values holds squared errors (po2point, po2plane) or angular similarities in
    [0, 1] (pl2plane), one per valid source point.
    """
    direction: str
    values: np.ndarray
    valid_count: int
    skipped_count: int = 0

    @property
    def source_count(self):
        return self.valid_count + self.skipped_count


@dataclass
class MetricOptions:
    families: tuple = FAMILIES
    k_avg: int = 3
    radius_multiplier: float = 4.0
    max_skipped_fraction: float = 0.1
    po2plane_normal_source: str = 'reference'
    precision: int = None
    normal_radius: float = None

    def __post_init__(self):
        families = tuple(self.families)
        unknown = [f for f in families if f not in FAMILIES]
        if unknown:
            raise DataError(f"unknown metric families {unknown}; choose from {FAMILIES}")
        self.families = tuple(f for f in FAMILIES if f in families)
        if self.po2plane_normal_source not in ('reference', 'target'):
            raise DataError(f"po2plane normal source must be 'reference' or 'target', "
                            f"got {self.po2plane_normal_source!r}")
        if int(self.k_avg) < 1:
            raise DataError(f"k_avg must be >= 1, got {self.k_avg}")

    @classmethod
    def from_config(cls, **overrides):
        config = load_config()
        metrics = config['metrics']
        values = {
            'families': tuple(metrics['families']),
            'k_avg': metrics['k_avg'],
            'radius_multiplier': config['normals']['radius_multiplier'],
            'max_skipped_fraction': metrics['max_skipped_fraction'],
            'po2plane_normal_source': metrics['po2plane_normal_source'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def parse_families(text):
    """'po2point,pl2plane' or 'all' -> tuple of families"""
    names = [name.strip().lower() for name in str(text).split(',') if name.strip()]
    if not names or 'all' in names:
        return FAMILIES
    unknown = [name for name in names if name not in FAMILIES]
    if unknown:
        raise DataError(f"unknown metric families {unknown}; choose from {FAMILIES + ('all',)}")
    return tuple(name for name in FAMILIES if name in names)


@dataclass(frozen=True)
class PreparedReference:
    """A reference cloud with its search index and, when a normal-based family needs them, its normals"""
    cloud: PointCloud
    index: SpatialIndex
    normal_field: NormalField = None


def metric_normals(cloud, options, index=None):
    """
    Normals as the metrics consume them

    Stored normals are used as they are. Otherwise normals are estimated without
    MST orientation: pl2plane takes |cos| and the T->R po2plane mean is
    sign-aligned, so no score depends on the sign.
    """
    if cloud.has_normals:
        return NormalField.from_cloud(cloud)
    estimator = NormalEstimator(radius_multiplier=options.radius_multiplier)
    return estimator.estimate(cloud, radius=options.normal_radius, index=index)


def prepare_reference(reference, options=None):
    """Build the reference index and normals once, for reuse across many compare() calls"""
    options = options or MetricOptions.from_config()
    index = SpatialIndex.build(reference)
    normal_field = None
    if {'po2plane', 'pl2plane'} & set(options.families):
        normal_field = metric_normals(reference, options, index=index)
    return PreparedReference(cloud=reference, index=index, normal_field=normal_field)


class _Pair:
    """Indices, correspondences and lazily estimated normals shared by all families"""

    def __init__(self, reference, degraded, options, prepared=None):
        self.reference = reference
        self.degraded = degraded
        self.options = options
        self._correspondences = {}
        self._fields = {}
        if prepared is not None:
            if prepared.cloud is not reference:
                raise DataError("prepared reference belongs to a different cloud")
            self.indexes = {'R': prepared.index, 'T': SpatialIndex.build(degraded)}
            if prepared.normal_field is not None:
                self._fields['R'] = prepared.normal_field
        else:
            self.indexes = {'R': SpatialIndex.build(reference), 'T': SpatialIndex.build(degraded)}

    def correspondence(self, direction):
        """Matches on raw coordinates; R->T queries reference points against the degraded cloud"""
        if direction not in self._correspondences:
            source, target = _sides(direction)
            self._correspondences[direction] = self.indexes[target].correspond(self.cloud(source).points)
        return self._correspondences[direction]

    def use_normals(self, reference_field=None, degraded_field=None):
        """Supply precomputed NormalFields instead of estimating them"""
        if reference_field is not None:
            self._fields['R'] = reference_field
        if degraded_field is not None:
            self._fields['T'] = degraded_field

    def cloud(self, side):
        return self.reference if side == 'R' else self.degraded

    def normal_field(self, side):
        if side not in self._fields:
            self._fields[side] = metric_normals(self.cloud(side), self.options, index=self.indexes[side])
        if self._fields[side].valid_count == 0:
            role = 'reference' if side == 'R' else 'degraded'
            raise NumericError(f"{role} cloud has no valid normals")
        return self._fields[side]


def _sides(direction):
    if direction == 'R->T':
        return 'R', 'T'
    if direction == 'T->R':
        return 'T', 'R'
    raise DataError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def po2point_errors(reference, degraded, direction, pair=None):
    """Squared nearest-neighbour distance for every source point"""
    pair = pair or _Pair(reference, degraded, MetricOptions())
    corr = pair.correspondence(direction)
    return DirectionalErrors(direction=direction, values=corr.squared_distance.copy(),
                             valid_count=len(corr))


def po2plane_errors(reference, degraded, ref_normals, direction, k_avg=3,
                    deg_normals=None, normal_source='reference', pair=None):
    """
    Squared projection of the error vector onto a normal

    With normal_source='reference', R->T projects onto the source reference
    normal and T->R onto the renormalized mean of the valid normals of the k_avg
    nearest reference points. With normal_source='target' the matched point's
    normal is used, which for R->T needs deg_normals.
    """
    pair = pair or _Pair(reference, degraded, MetricOptions(k_avg=k_avg))
    pair.use_normals(ref_normals, deg_normals)

    corr = pair.correspondence(direction)
    _, target = _sides(direction)

    if normal_source == 'target':
        normal_field = pair.normal_field(target)
        normals = normal_field.normals[corr.target_index]
        usable = normal_field.valid_mask[corr.target_index]
    elif direction == 'R->T':
        normal_field = pair.normal_field('R')
        normals = normal_field.normals
        usable = normal_field.valid_mask.copy()
    else:
        normals, usable = _mean_reference_normals(pair, k_avg)

    projected = np.einsum('ij,ij->i', corr.error_vector[usable], normals[usable])
    values = projected * projected
    skipped = int(len(corr) - usable.sum())
    if skipped:
        logger.warning(f"po2plane {direction}: skipped {skipped} of {len(corr)} points without a valid normal")
    return DirectionalErrors(direction=direction, values=values, valid_count=int(usable.sum()),
                             skipped_count=skipped)


def pl2plane_errors(reference, degraded, ref_normals, deg_normals, direction, pair=None):
    """
    Angular similarity 1 - 2 theta / pi between source and matched normals

    theta = atan2(|a x b|, |a . b|) is the unsigned angle between the tangent
    planes; it is exactly 0 for parallel or antiparallel normals.
    """
    pair = pair or _Pair(reference, degraded, MetricOptions())
    pair.use_normals(ref_normals, deg_normals)

    corr = pair.correspondence(direction)
    source, target = _sides(direction)
    source_field = pair.normal_field(source)
    target_field = pair.normal_field(target)

    usable = source_field.valid_mask & target_field.valid_mask[corr.target_index]
    a = source_field.normals[usable]
    b = target_field.normals[corr.target_index[usable]]
    theta = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.abs(np.einsum('ij,ij->i', a, b)))
    values = 1.0 - 2.0 * theta / np.pi

    skipped = int(len(corr) - usable.sum())
    if skipped:
        logger.warning(f"pl2plane {direction}: skipped {skipped} of {len(corr)} pairs with an invalid normal")
    return DirectionalErrors(direction=direction, values=values, valid_count=int(usable.sum()),
                             skipped_count=skipped)


def _mean_reference_normals(pair, k_avg):
    """Sign-aligned mean of the valid normals among the k_avg nearest reference points"""
    normal_field = pair.normal_field('R')
    neighbours, _ = pair.indexes['R'].k_nearest_many(pair.degraded.points, k_avg)
    candidates = normal_field.normals[neighbours]
    valid = normal_field.valid_mask[neighbours]

    # align each neighbour with the first valid one so opposite orientations do not cancel
    first = np.argmax(valid, axis=1)
    anchor = candidates[np.arange(len(candidates)), first]
    signs = np.where(np.einsum('ijk,ik->ij', candidates, anchor) < 0, -1.0, 1.0)
    summed = (candidates * (signs * valid)[:, :, None]).sum(axis=1)

    length = np.linalg.norm(summed, axis=1)
    usable = valid.any(axis=1) & (length > MIN_NORMAL_LENGTH)
    normals = np.zeros_like(summed)
    normals[usable] = summed[usable] / length[usable, None]
    return normals, usable


def compare(reference, degraded, options=None, prepared=None):
    """
    Symmetric full-reference geometry scores

    MSE, HAUS and angular scores use coordinates divided by the reference peak P;
    PSNR uses the raw-grid MSE. Correspondences are computed once on raw
    coordinates and shared by every family. `prepared` (from prepare_reference)
    supplies the reference index and normals.
    """
    options = options or MetricOptions.from_config()
    if len(reference) == 0 or len(degraded) == 0:
        raise DataError("compare needs two non-empty clouds")

    precision = options.precision if options.precision is not None else reference.precision
    if precision is None:
        raise DataError("reference precision is unknown; supply it to compute normalized scores")
    peak = float(2 ** int(precision) - 1)
    scale = 1.0 / (peak * peak)

    pair = _Pair(reference, degraded, options, prepared=prepared)
    report = MetricReport(
        num_points_ratio=CloudProcessor.point_count_ratio(reference, degraded),
        peak=peak,
        precision=int(precision),
        normalized=True,
    )

    if 'po2point' in options.families:
        errors = {d: po2point_errors(reference, degraded, d, pair=pair) for d in DIRECTIONS}
        report.po2point = _squared_block(errors, peak, scale)

    if 'po2plane' in options.families:
        errors = {
            d: po2plane_errors(reference, degraded, None, d, k_avg=options.k_avg,
                               normal_source=options.po2plane_normal_source, pair=pair)
            for d in DIRECTIONS
        }
        _check_skipped('po2plane', errors, options.max_skipped_fraction)
        report.po2plane = _squared_block(errors, peak, scale)

    if 'pl2plane' in options.families:
        errors = {d: pl2plane_errors(reference, degraded, None, None, d, pair=pair) for d in DIRECTIONS}
        _check_skipped('pl2plane', errors, options.max_skipped_fraction)
        report.pl2plane = _angular_block(errors)

    logger.info(f"Compared {len(reference)} reference and {len(degraded)} degraded points "
                f"({', '.join(options.families)})")
    return report


def _check_skipped(family, errors, max_fraction):
    for direction, err in errors.items():
        if err.valid_count == 0:
            raise NumericError(f"{family} {direction}: no point has a usable normal")
        fraction = err.skipped_count / err.source_count
        if fraction > max_fraction:
            raise NumericError(
                f"{family} {direction}: {fraction:.1%} of points skipped, above the {max_fraction:.1%} limit"
            )


def _squared_block(errors, peak, scale):
    directions = {}
    for direction, err in errors.items():
        mse_raw = pool_mse(err)
        directions[direction] = {
            'mse': mse_raw * scale,
            'haus': pool_haus(err) * scale,
            'psnr_db': psnr_db(mse_raw, peak=peak),
        }
    block = {
        'mse': max(d['mse'] for d in directions.values()),
        'haus': max(d['haus'] for d in directions.values()),
        'psnr_db': min(d['psnr_db'] for d in directions.values()),
        'directions': directions,
    }
    block['skipped'] = {direction: err.skipped_count for direction, err in errors.items()}
    return block


def _angular_block(errors):
    directions = {direction: pool_angular(err) for direction, err in errors.items()}
    block = {key: min(d[key] for d in directions.values()) for key in ('mad', 'msad', 'rmsad')}
    block['directions'] = directions
    block['skipped'] = {direction: err.skipped_count for direction, err in errors.items()}
    return block
