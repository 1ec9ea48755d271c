import argparse
import json
import logging
import os
import sys

import pandas as pd
from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.codec.octree_codec import OctreeCodec
from src.codec.stream import MAX_DEPTH
from src.config import content_parameters, load_config
from src.data.data_loader import DataLoader
from src.data.data_processor import CloudProcessor
from src.errors import DataError
from src.metrics.geometry_metrics import MetricOptions, compare

logger = logging.getLogger(__name__)

QUALITY_ORDER = ('L', 'M', 'H')


def sweep_depths(content=None, precision=None):
    """Operating-point depths for a content, else every depth up to its precision"""
    params = content_parameters(content) if content else None
    if params is not None:
        return [params['pcl_depth'][q] for q in QUALITY_ORDER]
    if precision is None:
        raise DataError("depth sweep needs explicit depths, a known content or a precision")
    return list(range(1, min(int(precision), MAX_DEPTH) + 1))


def run_octree_sweep(cloud_or_path, depths=None, content=None, precision=None,
                     entropy_mode=None, output_dir=None, name=None):
    """Depth sweep: rate and distortion of the octree coder

    Encodes the cloud at each depth, decodes it and scores the decoded cloud
    against the input with symmetric po2point MSE/PSNR.

    Args:
        cloud_or_path: PointCloud or PLY path
        depths: octree depths; default from the content's operating points
        content: content name looked up in config/dataset.json
        precision: coordinate precision; default from the content or the cloud
        entropy_mode: 'raw' or 'range'; default from config
        output_dir: where <name>_rd.csv goes

    Returns:
        DataFrame with one row per depth
    """
    print("\n" + "=" * 60)
    print("OCTREE DEPTH SWEEP")
    print("=" * 60)

    params = content_parameters(content) if content else None
    if precision is None and params is not None:
        precision = params['precision']

    if isinstance(cloud_or_path, str):
        cloud = DataLoader().load_cloud(cloud_or_path, precision=precision)
        name = name or os.path.splitext(os.path.basename(cloud_or_path))[0]
    else:
        cloud = cloud_or_path
        name = name or (content or 'cloud')
    precision = precision if precision is not None else cloud.precision
    if precision is None:
        raise DataError("cloud precision is unknown; pass --precision or --content")
    if cloud.precision != precision or not cloud.voxelized:
        cloud = CloudProcessor().voxelize(cloud, precision)

    depths = depths or sweep_depths(content, precision)
    print(f"Testing {len(depths)} depths on {len(cloud)} points: {depths}")

    codec = OctreeCodec(entropy_mode=entropy_mode)
    entropy_mode = codec.entropy_mode
    options = MetricOptions.from_config(families=('po2point',), precision=precision)
    rows = []
    for i, depth in enumerate(depths):
        print(f"\n[{i + 1}/{len(depths)}] Depth {depth}")
        stream = codec.encode(cloud, depth, entropy_mode=entropy_mode)
        decoded = codec.decode(stream)
        total_bits, bpp = codec.rate_bits(stream)
        report = compare(cloud, decoded, options)

        rows.append({
            'depth': depth,
            'leaf_size': stream.leaf_size,
            'decoded_points': len(decoded),
            'total_bits': total_bits,
            'bpp': bpp,
            'num_points_ratio': report.num_points_ratio,
            'po2point_mse': report.po2point['mse'],
            'po2point_psnr': report.po2point['psnr_db'],
        })
        print(f"  leaf={stream.leaf_size:g}, bpp={bpp:.4f}, ratio={report.num_points_ratio:.4f}, "
              f"PSNR={report.po2point['psnr_db']:.2f} dB")

    results = pd.DataFrame(rows)

    output_dir = output_dir or load_config()['runs']['octree_sweep_dir']
    os.makedirs(output_dir, exist_ok=True)
    results.to_csv(os.path.join(output_dir, f"{name}_rd.csv"), index=False)
    with open(os.path.join(output_dir, f"{name}_settings.json"), 'w') as f:
        json.dump({'content': content, 'precision': precision, 'entropy_mode': entropy_mode,
                   'depths': [int(d) for d in depths]}, f, indent=2)
    print(f"\nResults saved to {output_dir}/")

    return results


def main():
    """Main function to run the depth sweep"""
    load_dotenv()
    parser = argparse.ArgumentParser(description="Rate-distortion sweep of the octree coder")
    parser.add_argument('cloud')
    parser.add_argument('--content', default=None)
    parser.add_argument('--precision', type=int, default=None)
    parser.add_argument('--depths', type=int, nargs='+', default=None)
    parser.add_argument('--entropy', choices=['raw', 'range'], default=None)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='[%(asctime)s] [%(levelname)s] %(message)s',
                        datefmt='%H:%M:%S')
    return run_octree_sweep(args.cloud, depths=args.depths, content=args.content,
                            precision=args.precision, entropy_mode=args.entropy)


if __name__ == "__main__":
    main()
