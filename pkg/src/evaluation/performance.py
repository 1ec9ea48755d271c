import logging
from itertools import combinations

import numpy as np
import pandas as pd

from src.config import load_config
from src.errors import CloudGaugeError
from src.evaluation.logistic_fit import MIN_POINTS, fit_logistic
from src.evaluation.significance import plcc, residual_f_test

logger = logging.getLogger(__name__)

ALL = 'All'
RESIDUAL_COLUMNS = ['metric', 'rendering', 'codec', 'stimulus_id', 'objective_value', 'mos', 'predicted', 'residual']


def grouping_label(rendering, codec):
    return f"{rendering}/{codec}"


class MetricPerformance:
    """PLCC of logistic-mapped objective scores against MOS, and residual F-tests"""

    def __init__(self, f_alpha=None, max_iterations=None, tolerance=None):
        params = load_config()['stats']
        self.f_alpha = f_alpha if f_alpha is not None else params['f_test_alpha']
        self.max_iterations = max_iterations or params['logistic_max_iterations']
        self.tolerance = tolerance or params['logistic_tolerance']

    def evaluate_metric(self, x, mos):
        """
        Fit the logistic mapping and score the prediction

        Returns:
            dict with plcc (x100), fit (LogisticFit), predicted and n
        """
        fit = fit_logistic(x, mos, max_iterations=self.max_iterations, tolerance=self.tolerance)
        predicted = fit.predict(x)
        return {
            'plcc': 100.0 * plcc(predicted, mos),
            'fit': fit,
            'predicted': predicted,
            'n': len(predicted),
        }

    def calculate_metrics(self, scores, metrics, renderings=None, codecs=None):
        """
        PLCC table over every (rendering, codec) grouping, codec groups plus 'All'

        Args:
            scores: DataFrame with stimulus_id, codec, rendering, mos and one column per metric
            metrics: metric column names, in table row order

        Returns:
            (plcc table indexed by metric with one column per grouping, long residual DataFrame)
        """
        if scores.empty:
            return self._empty_metrics(metrics)

        renderings = renderings or list(dict.fromkeys(scores['rendering']))
        codecs = codecs or list(dict.fromkeys(scores['codec']))

        table = {}
        residual_frames = []
        for rendering in renderings:
            for codec in list(codecs) + [ALL]:
                mask = scores['rendering'] == rendering
                if codec != ALL:
                    mask &= scores['codec'] == codec
                # fixed row order keeps the fit and its sums independent of input order
                subset = scores[mask].sort_values('stimulus_id', kind='mergesort', key=lambda ids: ids.astype(str))
                column = {}
                for metric in metrics:
                    column[metric], residuals = self._evaluate_group(subset, metric, rendering, codec)
                    if residuals is not None:
                        residual_frames.append(residuals)
                table[grouping_label(rendering, codec)] = column

        plcc_table = pd.DataFrame(table, index=list(metrics))
        plcc_table.index.name = 'metric'
        residuals = (pd.concat(residual_frames, ignore_index=True) if residual_frames
                     else pd.DataFrame(columns=RESIDUAL_COLUMNS))
        return plcc_table, residuals

    def _evaluate_group(self, subset, metric, rendering, codec):
        label = f"{metric} @ {grouping_label(rendering, codec)}"
        x = subset[metric].to_numpy(dtype=np.float64)
        mos = subset['mos'].to_numpy(dtype=np.float64)
        if len(x) < MIN_POINTS:
            logger.warning(f"Skipping {label}: {len(x)} stimuli, need {MIN_POINTS}")
            return np.nan, None
        if not np.all(np.isfinite(x)):
            logger.warning(f"Skipping {label}: non-finite objective values")
            return np.nan, None

        try:
            result = self.evaluate_metric(x, mos)
        except CloudGaugeError as e:
            logger.warning(f"Skipping {label}: {e}")
            return np.nan, None

        residuals = pd.DataFrame({
            'metric': metric,
            'rendering': rendering,
            'codec': codec,
            'stimulus_id': subset['stimulus_id'].astype(str).to_numpy(),
            'objective_value': x,
            'mos': mos,
            'predicted': result['predicted'],
            'residual': result['fit'].residuals,
        })
        return result['plcc'], residuals

    def f_test_matrix(self, residuals, rendering, codec, metrics=None):
        """Residual F-tests for every metric pair within one grouping"""
        group = residuals[(residuals['rendering'] == rendering) & (residuals['codec'] == codec)]
        metrics = metrics or list(dict.fromkeys(group['metric']))

        per_metric = {
            metric: group.loc[group['metric'] == metric].sort_values('stimulus_id')['residual'].to_numpy()
            for metric in metrics
        }
        results = []
        for first, second in combinations(metrics, 2):
            if len(per_metric[first]) < 2 or len(per_metric[second]) < 2:
                continue
            result = residual_f_test(per_metric[first], per_metric[second],
                                     alpha=self.f_alpha, names=(first, second))
            result.details['grouping'] = grouping_label(rendering, codec)
            results.append(result)
        return results

    def _empty_metrics(self, metrics):
        """Empty table and residual frame"""
        table = pd.DataFrame(index=pd.Index(list(metrics), name='metric'))
        return table, pd.DataFrame(columns=RESIDUAL_COLUMNS)

    def print_metrics(self, plcc_table):
        """Print the PLCC table in a readable format"""
        print("\n" + "=" * 50)
        print("METRIC PERFORMANCE (PLCC x 100)")
        print("=" * 50)
        for grouping in plcc_table.columns:
            print(f"{grouping}:")
            for metric, value in plcc_table[grouping].items():
                shown = "   n/a" if pd.isna(value) else f"{value:6.2f}"
                print(f"  {metric:<20} {shown}")
            print("-" * 50)
        print("=" * 50 + "\n")
