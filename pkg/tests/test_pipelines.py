import json
import os

import numpy as np
import pandas as pd
import pytest

from src.data.ply_io import write_ply
from src.data.point_cloud import PointCloud
from src.errors import DataError, ManifestError
from src.metrics.report import FAMILIES, SCHEMA_VERSION
from src.run_evaluation import run_evaluation
from src.run_octree_sweep import run_octree_sweep, sweep_depths
from src.run_stats import run_stats

DATASET_ENV = 'CLOUDGAUGE_DATASET'
STIMULI = [('Loot', q) for q in 'LMH'] + [('Longdress', q) for q in 'LMH']


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv('CLOUDGAUGE_CACHE_DIR', str(tmp_path / 'cache'))


@pytest.fixture
def manifest(voxel_cloud, tmp_path, rng):
    """Six degraded versions of one reference, each shown under two renderings"""
    clouds = tmp_path / 'clouds'
    write_ply(voxel_cloud, str(clouds / 'reference.ply'))

    rows = []
    for level, (content, quality) in enumerate(STIMULI, start=1):
        noise = rng.integers(-level, level + 1, size=voxel_cloud.points.shape)
        degraded = PointCloud(points=np.clip(voxel_cloud.points + noise, 0, 1023))
        write_ply(degraded, str(clouds / f'deg{level}.ply'))
        mos = 4.8 - 0.6 * level + rng.uniform(-0.05, 0.05)
        for rendering, offset in (('RPoint', 0.0), ('RMesh', 0.1 + 0.05 * level)):
            rows.append({
                'stimulus_id': f'{rendering}-{level}', 'reference_path': 'clouds/reference.ply',
                'degraded_path': f'clouds/deg{level}.ply', 'codec': 'PCL', 'rendering': rendering,
                'quality': quality, 'content': content, 'mos': round(min(mos + offset, 5.0), 3),
            })
    path = tmp_path / 'manifest.csv'
    pd.DataFrame(rows).to_csv(path, index=False)
    return str(path)


def test_evaluation_then_stats(manifest, tmp_path):
    output_dir = str(tmp_path / 'evaluation')
    plcc_table, residuals, scores = run_evaluation(manifest, output_dir=output_dir, families=('po2point',),
                                                   progress=False)

    assert len(scores) == 12
    assert list(plcc_table.columns) == ['RPoint/PCL', 'RPoint/All', 'RMesh/PCL', 'RMesh/All']
    assert not np.isnan(plcc_table.loc['po2point_psnr', 'RPoint/PCL'])
    for name in ('scores.csv', 'plcc_table.csv', 'residuals.csv'):
        assert os.path.exists(os.path.join(output_dir, name))

    # one comparison per degraded cloud, shared by both renderings
    point = scores[scores['rendering'] == 'RPoint']['po2point_mse'].to_numpy()
    mesh = scores[scores['rendering'] == 'RMesh']['po2point_mse'].to_numpy()
    assert np.array_equal(point, mesh)
    assert np.all(np.diff(scores[scores['rendering'] == 'RPoint']['po2point_mse']) > 0)

    report = run_stats(os.path.join(output_dir, 'scores.csv'),
                       residuals_path=os.path.join(output_dir, 'residuals.csv'),
                       output_dir=str(tmp_path / 'stats'))

    assert set(report['mos_tests']) == {'PCL', 'All'}
    tests = report['mos_tests']['PCL']
    assert tests['n'] == 12
    assert set(tests['mos_averages']) == {'RPoint', 'RMesh'}
    assert 'p_value' in tests['welch_anova']
    wilcoxon = tests['wilcoxon']['RPoint vs RMesh']
    assert wilcoxon['details']['n'] == 6
    assert wilcoxon['details']['w_minus'] == 21.0
    assert 'RPoint/PCL' in report['residual_f_tests']
    with open(tmp_path / 'stats' / 'stats_report.json') as f:
        written = json.load(f)
    assert written['schema'] == SCHEMA_VERSION == 1
    assert written['alpha'] == 0.05


def test_plcc_table_ignores_manifest_row_order(manifest, tmp_path):
    table, _, _ = run_evaluation(manifest, output_dir=str(tmp_path / 'first'), families=('po2point',),
                                 progress=False)

    frame = pd.read_csv(manifest)
    shuffled_path = str(tmp_path / 'shuffled.csv')
    frame.sample(frac=1.0, random_state=7).to_csv(shuffled_path, index=False)
    shuffled, _, _ = run_evaluation(shuffled_path, output_dir=str(tmp_path / 'second'),
                                    families=('po2point',), progress=False)

    pd.testing.assert_frame_equal(shuffled[table.columns], table, check_exact=True)


def test_evaluation_needs_mos(manifest, tmp_path):
    frame = pd.read_csv(manifest)
    frame.loc[0, 'mos'] = np.nan
    frame.to_csv(manifest, index=False)
    with pytest.raises(ManifestError, match="mos"):
        run_evaluation(manifest, output_dir=str(tmp_path / 'out'), families=('po2point',), progress=False)


def test_depth_sweep(voxel_cloud, tmp_path):
    results = run_octree_sweep(voxel_cloud, depths=[3, 6, 10], precision=10,
                               output_dir=str(tmp_path), name='vc')

    assert list(results['depth']) == [3, 6, 10]
    assert results['bpp'].is_monotonic_increasing
    assert results['decoded_points'].is_monotonic_increasing
    assert results['decoded_points'].iloc[-1] == len(voxel_cloud)
    # leaf centres sit half a voxel off on every axis at full depth
    assert results['po2point_mse'].iloc[-1] == pytest.approx(0.75 / 1023 ** 2)
    assert os.path.exists(tmp_path / 'vc_rd.csv')
    with open(tmp_path / 'vc_settings.json') as f:
        assert json.load(f)['depths'] == [3, 6, 10]


def test_sweep_depths():
    assert sweep_depths('Loot') == [7, 8, 9]
    assert sweep_depths(precision=4) == [1, 2, 3, 4]
    with pytest.raises(DataError):
        sweep_depths()


@pytest.mark.dataset
@pytest.mark.skipif(not os.getenv(DATASET_ENV), reason=f"set {DATASET_ENV} to the dataset manifest CSV")
def test_public_dataset(tmp_path):
    plcc_table, _, scores = run_evaluation(os.environ[DATASET_ENV], output_dir=str(tmp_path),
                                           families=FAMILIES, progress=False)
    assert len(scores) > 0
    assert plcc_table.notna().any().any()
