import json
import math

import numpy as np
import pytest

from src.data.point_cloud import PointCloud
from src.errors import DataError, NumericError
from src.metrics.geometry_metrics import (MetricOptions, compare, metric_normals, parse_families,
                                          pl2plane_errors, po2plane_errors, po2point_errors,
                                          prepare_reference)
from src.metrics.pooling import error_histogram, pool_angular, pool_haus, pool_mse, psnr_db
from src.metrics.report import FAMILIES, IDENTICAL, MetricReport
from tests.conftest import plane_grid

P10 = 1023.0


def _options(*families, **kwargs):
    return MetricOptions(families=families or FAMILIES, precision=kwargs.pop('precision', 10), **kwargs)


@pytest.fixture
def shifted_plane():
    points = plane_grid(size=10, z=0.0)
    normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
    reference = PointCloud(points=points, normals=normals)
    degraded = PointCloud(points=points + np.array([0.3, 0.2, 0.5]))
    return reference, degraded


def test_psnr_of_unit_mse_at_ten_bits():
    assert psnr_db(1.0, precision=10) == pytest.approx(64.97, abs=0.01)
    assert psnr_db(1.0, peak=P10) == pytest.approx(10 * math.log10(3 * P10 ** 2))
    assert psnr_db(0.0, precision=10) == math.inf
    with pytest.raises(DataError):
        psnr_db(-1.0, precision=10)


def test_pooling():
    assert pool_mse(np.array([1.0, 3.0])) == 2.0
    assert pool_haus(np.array([1.0, 3.0])) == 3.0
    angular = pool_angular(np.array([1.0, 0.5]))
    assert angular['mad'] == 0.75
    assert angular['msad'] == 0.625
    assert angular['rmsad'] == pytest.approx(math.sqrt(0.625))
    with pytest.raises(NumericError):
        pool_mse(np.array([]))


def test_identical_clouds(sphere_with_normals):
    report = compare(sphere_with_normals, sphere_with_normals, _options())

    assert report.num_points_ratio == 1.0
    assert report.po2point['mse'] == 0.0
    assert report.po2point['psnr_db'] == math.inf
    assert report.po2plane['mse'] == 0.0
    assert report.pl2plane['mad'] == 1.0
    assert report.to_dict()['po2point']['psnr_db'] == IDENTICAL


def test_point_to_point_by_hand():
    reference = PointCloud(points=[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    degraded = PointCloud(points=[[0.0, 0.0, 1.0]])

    forward = po2point_errors(reference, degraded, 'R->T')
    assert np.array_equal(forward.values, [1.0, 101.0])
    backward = po2point_errors(reference, degraded, 'T->R')
    assert np.array_equal(backward.values, [1.0])

    report = compare(reference, degraded, _options('po2point'))
    block = report.po2point
    assert block['mse'] == pytest.approx(51.0 / P10 ** 2)
    assert block['haus'] == pytest.approx(101.0 / P10 ** 2)
    assert block['psnr_db'] == pytest.approx(10 * math.log10(3 * P10 ** 2 / 51.0))
    assert block['directions']['T->R']['mse'] == pytest.approx(1.0 / P10 ** 2)
    assert report.po2plane is None and report.pl2plane is None
    assert report.num_points_ratio == 0.5


def test_point_to_plane_keeps_only_the_normal_component(shifted_plane):
    reference, degraded = shifted_plane
    report = compare(reference, degraded, _options('po2point', 'po2plane'))

    assert report.po2point['mse'] == pytest.approx(0.38 / P10 ** 2)
    assert report.po2plane['mse'] == pytest.approx(0.25 / P10 ** 2)
    assert report.po2plane['directions']['T->R']['mse'] == pytest.approx(0.25 / P10 ** 2)
    assert report.po2plane['psnr_db'] == pytest.approx(10 * math.log10(3 * P10 ** 2 / 0.25))
    assert report.po2plane['skipped'] == {'R->T': 0, 'T->R': 0}


def test_point_to_plane_with_target_normals(shifted_plane):
    reference, degraded = shifted_plane
    degraded = degraded.replace(normals=reference.normals)

    errors = po2plane_errors(reference, degraded, None, 'R->T', normal_source='target')
    assert np.allclose(errors.values, 0.25)
    assert errors.skipped_count == 0


def test_plane_to_plane_ignores_normal_sign(sphere_with_normals):
    flipped = sphere_with_normals.replace(normals=-sphere_with_normals.normals)
    errors = pl2plane_errors(sphere_with_normals, flipped, None, None, 'R->T')
    assert np.all(errors.values == 1.0)

    report = compare(sphere_with_normals, flipped, _options('pl2plane'))
    assert report.pl2plane['mad'] == 1.0


def test_perpendicular_normals_score_zero():
    points = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    reference = PointCloud(points=points, normals=[[0.0, 0.0, 1.0]] * 2)
    degraded = PointCloud(points=points, normals=[[1.0, 0.0, 0.0]] * 2)
    errors = pl2plane_errors(reference, degraded, None, None, 'T->R')
    assert np.allclose(errors.values, 0.0)


def test_symmetric_scores_do_not_depend_on_argument_order(voxel_cloud, rng):
    other = PointCloud(points=np.clip(voxel_cloud.points[:400] + rng.integers(-3, 4, size=(400, 3)), 0, 1023),
                       precision=10)
    forward = compare(voxel_cloud, other, _options('po2point')).po2point
    backward = compare(other, voxel_cloud, _options('po2point')).po2point

    for key in ('mse', 'haus', 'psnr_db'):
        assert forward[key] == backward[key]
    assert forward['haus'] >= forward['mse']


def test_translation_and_scaling(voxel_cloud, rng):
    other = PointCloud(points=voxel_cloud.points[::2] + rng.integers(-2, 3, size=(250, 3)))
    base = compare(voxel_cloud, other, _options('po2point')).po2point

    moved = compare(PointCloud(points=voxel_cloud.points + 64.0), PointCloud(points=other.points + 64.0),
                    _options('po2point')).po2point
    assert moved['mse'] == base['mse']

    scaled = compare(PointCloud(points=voxel_cloud.points * 2.0), PointCloud(points=other.points * 2.0),
                     _options('po2point')).po2point
    assert scaled['mse'] == pytest.approx(4.0 * base['mse'])


def test_precision_must_be_known():
    cloud = PointCloud(points=[[0.5, 0.0, 0.0], [1.5, 0.0, 0.0]])
    with pytest.raises(DataError, match="precision"):
        compare(cloud, cloud, MetricOptions(families=('po2point',)))


def test_clouds_without_valid_normals():
    line = PointCloud(points=np.column_stack([np.arange(20.0), np.zeros(20), np.zeros(20)]))
    with pytest.raises(NumericError):
        compare(line, line, _options('po2plane'))


def test_report_round_trip(sphere_with_normals, tmp_path):
    report = compare(sphere_with_normals, sphere_with_normals, _options('po2point'))
    path = tmp_path / 'report.json'
    report.write_json(str(path))

    with open(path) as f:
        loaded = MetricReport.from_dict(json.load(f))
    assert loaded.po2point['psnr_db'] == math.inf
    assert loaded.flat()['po2point_mse'] == 0.0
    assert 'po2plane_mse' not in loaded.flat()


def test_histogram_counts_every_point(voxel_cloud, rng):
    other = PointCloud(points=voxel_cloud.points + rng.normal(0, 2, size=voxel_cloud.points.shape))
    errors = po2point_errors(voxel_cloud, other, 'R->T')
    histogram = error_histogram(errors, bins=12)

    assert len(histogram) == 12
    assert histogram['count'].sum() == len(voxel_cloud)
    assert histogram['bin_low'].iloc[0] == 0.0


def test_option_parsing():
    assert parse_families('all') == FAMILIES
    assert parse_families('pl2plane, po2point') == ('po2point', 'pl2plane')
    with pytest.raises(DataError):
        parse_families('po2line')
    with pytest.raises(DataError):
        MetricOptions(po2plane_normal_source='both')
    with pytest.raises(DataError):
        po2point_errors(PointCloud(points=[[0.0, 0.0, 0.0]]), PointCloud(points=[[1.0, 0.0, 0.0]]), 'R<-T')


def _random_unit(rng, n):
    normals = rng.normal(size=(n, 3))
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


@pytest.mark.parametrize('seed', range(20))
def test_cloud_against_itself_scores_exactly(seed):
    rng = np.random.default_rng(seed)
    points = np.unique(rng.integers(0, 16, size=(2000, 3)), axis=0).astype(np.float64)
    cloud = PointCloud(points=rng.permutation(points), precision=4, voxelized=True)

    report = compare(cloud, cloud, _options())
    assert report.num_points_ratio == 1.0
    assert report.po2point['mse'] == 0.0 and report.po2point['haus'] == 0.0
    assert report.po2plane['mse'] == 0.0 and report.po2plane['haus'] == 0.0
    for key in ('mad', 'msad', 'rmsad'):
        assert report.pl2plane[key] == 1.0
    flat = report.to_dict()
    assert flat['po2point']['psnr_db'] == IDENTICAL
    assert flat['po2plane']['psnr_db'] == IDENTICAL


def test_plane_similarity_stays_in_unit_interval(rng):
    reference = PointCloud(points=rng.uniform(0, 1023, size=(400, 3)), normals=_random_unit(rng, 400))
    degraded = PointCloud(points=rng.uniform(0, 1023, size=(300, 3)), normals=_random_unit(rng, 300))

    for direction in ('R->T', 'T->R'):
        values = pl2plane_errors(reference, degraded, None, None, direction).values
        assert values.min() >= 0.0 and values.max() <= 1.0

    forward = compare(reference, degraded, _options('po2point', 'pl2plane'))
    backward = compare(degraded, reference, _options('po2point', 'pl2plane'))
    for key in ('mad', 'msad', 'rmsad'):
        assert 0.0 <= forward.pl2plane[key] <= 1.0
        assert forward.pl2plane[key] == backward.pl2plane[key]
    for key in ('mse', 'haus', 'psnr_db'):
        assert forward.po2point[key] == backward.po2point[key]


def _brute_force_report(reference, degraded, k_avg=3, peak=P10):
    """Every family from a dense distance matrix"""
    r, t = reference.points, degraded.points
    rn, tn = reference.normals, degraded.normals
    d2 = ((r[:, None, :] - t[None, :, :]) ** 2).sum(axis=2)

    def similarity(a, b):
        cos = np.clip(np.abs((a * b).sum(axis=1)), 0.0, 1.0)
        return 1.0 - 2.0 * np.arccos(cos) / np.pi

    forward = np.argmin(d2, axis=1)
    error = t[forward] - r
    rt = {'sq': (error ** 2).sum(axis=1), 'plane': (error * rn).sum(axis=1) ** 2,
          'angle': similarity(rn, tn[forward])}

    backward = np.argmin(d2, axis=0)
    error = r[backward] - t
    neighbours = np.argsort(d2.T, axis=1, kind='stable')[:, :k_avg]
    candidates = rn[neighbours]
    signs = np.where((candidates * candidates[:, :1, :]).sum(axis=2) < 0, -1.0, 1.0)
    mean = (candidates * signs[:, :, None]).sum(axis=1)
    mean /= np.linalg.norm(mean, axis=1, keepdims=True)
    tr = {'sq': (error ** 2).sum(axis=1), 'plane': (error * mean).sum(axis=1) ** 2,
          'angle': similarity(tn, rn[backward])}

    expected = {}
    for family, key in (('po2point', 'sq'), ('po2plane', 'plane')):
        mse = [rt[key].mean(), tr[key].mean()]
        expected[family] = {
            'mse': max(mse) / peak ** 2,
            'haus': max(rt[key].max(), tr[key].max()) / peak ** 2,
            'psnr_db': min(10 * np.log10(3 * peak ** 2 / m) for m in mse),
        }
    expected['pl2plane'] = {
        'mad': min(rt['angle'].mean(), tr['angle'].mean()),
        'msad': min((rt['angle'] ** 2).mean(), (tr['angle'] ** 2).mean()),
    }
    expected['pl2plane']['rmsad'] = min(np.sqrt((rt['angle'] ** 2).mean()), np.sqrt((tr['angle'] ** 2).mean()))
    return expected


@pytest.mark.parametrize('seed', range(50))
def test_report_matches_brute_force(seed):
    rng = np.random.default_rng(1000 + seed)
    extent = rng.choice([32.0, 256.0, 1023.0])
    reference_points = rng.uniform(0, extent, size=(int(rng.integers(20, 501)), 3))
    if seed % 2:
        keep = rng.random(len(reference_points)) < rng.uniform(0.3, 1.0)
        degraded_points = reference_points[keep] + rng.normal(0, extent / 200, size=(int(keep.sum()), 3))
    else:
        degraded_points = rng.uniform(0, extent, size=(int(rng.integers(10, 501)), 3))
    reference = PointCloud(points=reference_points, normals=_random_unit(rng, len(reference_points)))
    degraded = PointCloud(points=degraded_points, normals=_random_unit(rng, len(degraded_points)))

    report = compare(reference, degraded, _options())
    expected = _brute_force_report(reference, degraded)

    assert report.num_points_ratio == len(degraded) / len(reference)
    for family, values in expected.items():
        block = getattr(report, family)
        for key, value in values.items():
            assert block[key] == pytest.approx(value, rel=1e-10), f"{family} {key}"


def test_prepared_reference_gives_the_same_report(sphere_cloud, rng):
    degraded = PointCloud(points=sphere_cloud.points[::3] + rng.normal(0, 0.5, size=(667, 3)))
    options = _options()
    prepared = prepare_reference(sphere_cloud, options)

    assert prepared.normal_field is not None
    cached = compare(sphere_cloud, degraded, options, prepared=prepared)
    again = compare(sphere_cloud, degraded.replace(points=degraded.points[::2]), options, prepared=prepared)
    assert cached.to_dict() == compare(sphere_cloud, degraded, options).to_dict()
    assert again.po2point['mse'] > 0.0

    assert prepare_reference(sphere_cloud, _options('po2point')).normal_field is None
    with pytest.raises(DataError, match="different cloud"):
        compare(degraded, sphere_cloud, options, prepared=prepared)


def test_metric_normals_skip_orientation(sphere_cloud, sphere_with_normals):
    options = _options()
    field = metric_normals(sphere_cloud, options)
    assert not field.oriented
    assert field.valid_count == len(sphere_cloud)

    stored = metric_normals(sphere_with_normals, options)
    assert stored.normals is sphere_with_normals.normals
    assert stored.valid_mask.all()


def test_flagged_normals_are_skipped(sphere_with_normals):
    valid = np.ones(len(sphere_with_normals), dtype=bool)
    valid[:40] = False
    flagged = sphere_with_normals.replace(normal_valid=valid)

    report = compare(flagged, sphere_with_normals, _options('pl2plane'))
    assert report.pl2plane['skipped'] == {'R->T': 40, 'T->R': 40}
    assert report.pl2plane['mad'] == 1.0

    valid[:200] = False
    with pytest.raises(NumericError, match="skipped"):
        compare(sphere_with_normals.replace(normal_valid=valid), sphere_with_normals, _options('pl2plane'))
