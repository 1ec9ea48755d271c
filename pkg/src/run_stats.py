import argparse
import json
import logging
import os
import sys
from itertools import combinations

import pandas as pd
from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import load_config
from src.data.data_loader import DataLoader
from src.errors import CloudGaugeError, ManifestError
from src.evaluation.performance import ALL, MetricPerformance
from src.evaluation.significance import (games_howell, levene_test, mos_averages, welch_anova,
                                         wilcoxon_signed_rank)
from src.metrics.report import SCHEMA_VERSION

logger = logging.getLogger(__name__)

PAIR_KEY = ['codec', 'content', 'quality']


def _guarded(label, test, *args, **kwargs):
    """Run one test; an unusable group is recorded instead of aborting the whole report"""
    try:
        result = test(*args, **kwargs)
    except CloudGaugeError as e:
        logger.warning(f"{label}: {e}")
        return {'error': str(e)}
    if isinstance(result, list):
        return [r.to_dict() for r in result]
    return result.to_dict()


def rendering_tests(scores, codec, alpha):
    """MOS tests across renderings for one codec group"""
    subset = scores.subset(codec=codec)
    groups = subset.mos_groups('rendering')
    label = f"codec {codec}"
    return {
        'n': len(subset),
        'mos_averages': mos_averages(groups) if groups else {},
        'welch_anova': _guarded(label, welch_anova, groups, alpha=alpha),
        'games_howell': _guarded(label, games_howell, groups, alpha=alpha),
        'levene': _guarded(label, levene_test, groups, alpha=alpha),
        'wilcoxon': paired_rendering_tests(subset, alpha, label),
    }


def paired_rendering_tests(scores, alpha, label):
    """Wilcoxon signed-rank between every pair of renderings, paired by codec, content and quality"""
    frame = scores.frame
    if frame.duplicated(PAIR_KEY + ['rendering']).any():
        raise ManifestError(f"{label}: (codec, content, quality) must be unique per rendering for pairing")

    renderings = list(dict.fromkeys(frame['rendering']))
    results = {}
    for first, second in combinations(renderings, 2):
        left = frame[frame['rendering'] == first].set_index(PAIR_KEY)['mos']
        right = frame[frame['rendering'] == second].set_index(PAIR_KEY)['mos']
        paired = pd.concat([left.rename('a'), right.rename('b')], axis=1, join='inner').sort_index()
        results[f"{first} vs {second}"] = _guarded(
            f"{label} {first} vs {second}", wilcoxon_signed_rank,
            paired['a'].to_numpy(), paired['b'].to_numpy(), alpha=alpha,
        )
    return results


def residual_tests(residuals, f_alpha):
    """Residual F-tests for every metric pair within each (rendering, codec) grouping"""
    performance = MetricPerformance(f_alpha=f_alpha)
    report = {}
    groupings = residuals[['rendering', 'codec']].drop_duplicates()
    for rendering, codec in groupings.itertuples(index=False):
        label = f"{rendering}/{codec}"
        try:
            results = performance.f_test_matrix(residuals, rendering, codec)
        except CloudGaugeError as e:
            logger.warning(f"{label}: {e}")
            report[label] = {'error': str(e)}
            continue
        report[label] = [r.to_dict() for r in results]
    return report


def run_stats(scores_path=None, residuals_path=None, alpha=None, f_alpha=None, output_dir=None):
    """Significance analysis of MOS across renderings, plus residual F-tests

    Args:
        scores_path: score CSV (stimulus_id, codec, rendering, quality, content, mos, ...)
        residuals_path: residuals.csv from the evaluation step, optional
        alpha: significance level of the MOS tests
        f_alpha: significance level of the residual F-tests
        output_dir: where stats_report.json goes

    Returns:
        report: dict written as JSON
    """
    print("\n" + "=" * 60)
    print("SIGNIFICANCE ANALYSIS")
    print("=" * 60)

    config = load_config()
    alpha = alpha if alpha is not None else config['stats']['alpha']
    f_alpha = f_alpha if f_alpha is not None else config['stats']['f_test_alpha']
    scores_path = scores_path or os.path.join(config['runs']['evaluation_dir'], 'scores.csv')
    output_dir = output_dir or config['runs']['stats_dir']

    loader = DataLoader(use_cache=False)
    scores = loader.load_scores(scores_path)
    print(f"Loaded {len(scores)} stimuli from {scores_path}")

    codecs = list(dict.fromkeys(scores.frame['codec']))
    report = {
        'schema': SCHEMA_VERSION,
        'alpha': alpha,
        'f_test_alpha': f_alpha,
        'mos_tests': {codec: rendering_tests(scores, codec, alpha) for codec in codecs + [ALL]},
    }

    if residuals_path:
        if not os.path.exists(residuals_path):
            raise FileNotFoundError(f"Residuals not found: {residuals_path}")
        residuals = pd.read_csv(residuals_path, dtype={'stimulus_id': str})
        report['residual_f_tests'] = residual_tests(residuals, f_alpha)

    print_summary(report)

    os.makedirs(output_dir, exist_ok=True)
    output_path = os.path.join(output_dir, 'stats_report.json')
    with open(output_path, 'w') as f:
        json.dump(report, f, indent=2)
        f.write('\n')
    print(f"\nResults saved to {output_path}")

    return report


def print_summary(report):
    for codec, tests in report['mos_tests'].items():
        print(f"\n{codec} ({tests['n']} stimuli)")
        for rendering, mean in tests['mos_averages'].items():
            print(f"  MOS {rendering:<10} {mean:.3f}")
        anova = tests['welch_anova']
        if 'error' in anova:
            print(f"  Welch ANOVA: {anova['error']}")
        else:
            verdict = "significant" if anova['significant'] else "not significant"
            print(f"  Welch ANOVA: F={anova['statistic']:.3f}, p={anova['p_value']:.4f} ({verdict})")

    for grouping, tests in report.get('residual_f_tests', {}).items():
        if isinstance(tests, dict):
            continue
        better = [t for t in tests if t['significant']]
        print(f"\n{grouping}: {len(better)} of {len(tests)} metric pairs differ significantly")


def main():
    """Main function to run the significance analysis"""
    load_dotenv()
    parser = argparse.ArgumentParser(description="MOS significance tests and residual F-tests")
    parser.add_argument('scores', nargs='?', default=None)
    parser.add_argument('--residuals', default=None)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='[%(asctime)s] [%(levelname)s] %(message)s',
                        datefmt='%H:%M:%S')
    return run_stats(args.scores, residuals_path=args.residuals)


if __name__ == "__main__":
    main()
