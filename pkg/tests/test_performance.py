import numpy as np
import pandas as pd
import pytest

from src.evaluation.logistic_fit import logistic
from src.evaluation.performance import RESIDUAL_COLUMNS, MetricPerformance


@pytest.fixture
def scores(rng):
    rows = []
    for rendering in ('RPoint', 'RMesh'):
        for codec in ('PCL', 'G-PCC'):
            for i in range(8):
                psnr = 40.0 + 4.0 * i + rng.normal(0, 0.5)
                rows.append({
                    'stimulus_id': f"{rendering}-{codec}-{i}",
                    'rendering': rendering,
                    'codec': codec,
                    'po2point_psnr': psnr,
                    'po2point_mse': 100.0 - psnr + rng.normal(0, 8.0),
                    'constant': 1.0,
                    'mos': float(np.clip(logistic(psnr, (4.7, 1.2, 55.0, 4.0)) + rng.normal(0, 0.1), 1, 5)),
                })
    return pd.DataFrame(rows)


@pytest.fixture
def performance():
    return MetricPerformance(f_alpha=0.2)


def test_table_has_a_column_per_grouping(scores, performance):
    table, residuals = performance.calculate_metrics(scores, ['po2point_psnr', 'po2point_mse'],
                                                     renderings=['RPoint', 'RMesh'], codecs=['PCL', 'G-PCC'])

    assert list(table.columns) == ['RPoint/PCL', 'RPoint/G-PCC', 'RPoint/All',
                                   'RMesh/PCL', 'RMesh/G-PCC', 'RMesh/All']
    assert list(table.index) == ['po2point_psnr', 'po2point_mse']
    assert (table.loc['po2point_psnr'] > 90).all()
    assert list(residuals.columns) == RESIDUAL_COLUMNS
    # 4 single-codec groupings of 8 stimuli and 2 'All' groupings of 16
    assert (residuals['metric'] == 'po2point_psnr').sum() == 4 * 8 + 2 * 16


def test_constant_metric_is_reported_missing(scores, performance):
    table, residuals = performance.calculate_metrics(scores, ['constant'])
    assert table.loc['constant'].isna().all()
    assert residuals.empty


def test_small_groups_are_skipped(scores, performance):
    small = scores.groupby(['rendering', 'codec']).head(4)
    table, _ = performance.calculate_metrics(small, ['po2point_psnr'])
    assert np.isnan(table.loc['po2point_psnr', 'RPoint/PCL'])
    assert not np.isnan(table.loc['po2point_psnr', 'RPoint/All'])


def test_f_test_matrix_compares_metric_pairs(scores, performance):
    _, residuals = performance.calculate_metrics(scores, ['po2point_psnr', 'po2point_mse'])
    results = performance.f_test_matrix(residuals, 'RPoint', 'All')

    assert len(results) == 1
    result = results[0]
    assert result.details['grouping'] == 'RPoint/All'
    assert result.details['metrics'] == ['po2point_psnr', 'po2point_mse']
    assert result.significant
    assert result.details['better'] == 'po2point_psnr'


def test_empty_scores(performance):
    empty = pd.DataFrame(columns=['stimulus_id', 'rendering', 'codec', 'mos', 'po2point_mse'])
    table, residuals = performance.calculate_metrics(empty, ['po2point_mse'])
    assert list(table.index) == ['po2point_mse']
    assert residuals.empty


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_table_does_not_depend_on_row_order(scores, performance, seed):
    metrics = ['po2point_psnr', 'po2point_mse']
    groupings = {'renderings': ['RPoint', 'RMesh'], 'codecs': ['PCL', 'G-PCC']}
    table, residuals = performance.calculate_metrics(scores, metrics, **groupings)

    shuffled = scores.sample(frac=1.0, random_state=seed).reset_index(drop=True)
    shuffled_table, shuffled_residuals = performance.calculate_metrics(shuffled, metrics, **groupings)

    pd.testing.assert_frame_equal(shuffled_table, table, check_exact=True)
    pd.testing.assert_frame_equal(shuffled_residuals, residuals, check_exact=True)
