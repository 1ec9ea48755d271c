import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import pandas as pd
from dotenv import load_dotenv
from tqdm import tqdm

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import content_parameters, load_config, load_dataset_config, thread_count
from src.data.data_loader import DataLoader
from src.errors import ManifestError
from src.evaluation.performance import MetricPerformance
from src.metrics.geometry_metrics import MetricOptions, compare, prepare_reference
from src.metrics.report import METRIC_FIELDS

logger = logging.getLogger(__name__)

METADATA_COLUMNS = ['stimulus_id', 'codec', 'rendering', 'quality', 'content']


def metric_columns(families):
    """Flat metric names for the selected families, in table order"""
    return [name for name, (family, _) in METRIC_FIELDS.items() if family in families] + ['num_points_ratio']


def compute_scores(manifest, options, loader=None, workers=None, progress=True):
    """
    Objective scores for every manifest row

    Each unique (reference, degraded) pair is compared once, and each reference
    is loaded, indexed and given normals once for all of its pairs. Results are
    returned in manifest order whatever the worker count.
    """
    loader = loader or DataLoader()
    workers = workers or thread_count()
    dataset = load_dataset_config()

    pairs = list(dict.fromkeys(zip(manifest['reference_path'], manifest['degraded_path'], manifest['content'])))
    logger.info(f"Computing metrics for {len(pairs)} unique pairs with {workers} worker(s)")

    def pair_precision(content):
        if options.precision is not None:
            return options.precision
        params = content_parameters(content, dataset)
        return params['precision'] if params is not None else None

    def pair_options(precision):
        return MetricOptions(
            families=options.families, k_avg=options.k_avg, radius_multiplier=options.radius_multiplier,
            max_skipped_fraction=options.max_skipped_fraction,
            po2plane_normal_source=options.po2plane_normal_source,
            precision=precision, normal_radius=options.normal_radius,
        )

    references = list(dict.fromkeys((path, pair_precision(content)) for path, _, content in pairs))

    def prepare(key):
        path, precision = key
        return prepare_reference(loader.load_cloud(path, precision=precision), pair_options(precision))

    def evaluate(pair):
        reference_path, degraded_path, content = pair
        precision = pair_precision(content)
        prepared = prepared_references[(reference_path, precision)]
        degraded = loader.load_cloud(degraded_path, precision=precision)
        return compare(prepared.cloud, degraded, pair_options(precision), prepared=prepared).flat()

    with ThreadPoolExecutor(max_workers=workers) as executor:
        prepared_references = dict(zip(references, tqdm(executor.map(prepare, references), total=len(references),
                                                        desc="References", disable=not progress)))
        results = list(tqdm(executor.map(evaluate, pairs), total=len(pairs),
                            desc="Comparing", disable=not progress))

    by_pair = {pair[:2]: values for pair, values in zip(pairs, results)}
    columns = metric_columns(options.families)
    rows = []
    for _, row in manifest.iterrows():
        values = by_pair[(row['reference_path'], row['degraded_path'])]
        record = {column: row[column] for column in METADATA_COLUMNS}
        record.update({column: values[column] for column in columns})
        record['mos'] = row['mos']
        rows.append(record)
    return pd.DataFrame(rows, columns=METADATA_COLUMNS + columns + ['mos'])


def run_evaluation(manifest_path, output_dir=None, families=None, k_avg=None,
                   radius_multiplier=None, precision=None, progress=True):
    """Compute scores for a manifest, then PLCC per (metric, rendering, codec) grouping

    Args:
        manifest_path: CSV with stimulus_id, reference_path, degraded_path, codec,
            rendering, quality, content, mos
        output_dir: where scores.csv, plcc_table.csv and residuals.csv go
        families: metric families, default from config
        k_avg: neighbours averaged for T->R po2plane normals
        radius_multiplier: normal radius multiplier
        precision: overrides the per-content precision

    Returns:
        plcc_table: DataFrame, one row per metric and one column per grouping
        residuals: long DataFrame of logistic residuals
        scores: per-stimulus objective scores and MOS
    """
    print("\n" + "=" * 60)
    print("METRIC EVALUATION")
    print("=" * 60)

    config = load_config()
    output_dir = output_dir or config['runs']['evaluation_dir']

    loader = DataLoader()
    manifest = loader.load_manifest(manifest_path)
    if manifest['mos'].isna().any():
        raise ManifestError(f"{manifest_path}: evaluation needs a mos value for every stimulus")

    options = MetricOptions.from_config(families=families, k_avg=k_avg,
                                        radius_multiplier=radius_multiplier, precision=precision)
    print(f"Stimuli: {len(manifest)}, metrics: {', '.join(options.families)}")

    scores = compute_scores(manifest, options, loader=loader, progress=progress)

    dataset = load_dataset_config()['dataset']
    renderings = [r for r in dataset['renderings'] if r in set(scores['rendering'])]
    renderings += sorted(set(scores['rendering']) - set(renderings))
    codecs = [c for c in dataset['codecs'] if c in set(scores['codec'])]
    codecs += sorted(set(scores['codec']) - set(codecs))

    performance = MetricPerformance()
    plcc_table, residuals = performance.calculate_metrics(
        scores, metric_columns(options.families), renderings=renderings, codecs=codecs,
    )
    performance.print_metrics(plcc_table)

    os.makedirs(output_dir, exist_ok=True)
    scores.to_csv(os.path.join(output_dir, 'scores.csv'), index=False)
    plcc_table.to_csv(os.path.join(output_dir, 'plcc_table.csv'))
    residuals.to_csv(os.path.join(output_dir, 'residuals.csv'), index=False)
    print(f"\nResults saved to {output_dir}/")

    return plcc_table, residuals, scores


def main():
    """Main function to run metric evaluation"""
    load_dotenv()
    parser = argparse.ArgumentParser(description="Evaluate geometry metrics against MOS")
    parser.add_argument('manifest')
    parser.add_argument('--output-dir', default=None)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='[%(asctime)s] [%(levelname)s] %(message)s',
                        datefmt='%H:%M:%S')
    return run_evaluation(args.manifest, output_dir=args.output_dir)


if __name__ == "__main__":
    main()
