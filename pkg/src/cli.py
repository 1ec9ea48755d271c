"""Command-line entry point: python -m src.cli <command> ..."""
import argparse
import logging
import os
import sys

from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.codec.octree_codec import OctreeCodec
from src.codec.stream import read_stream, write_stream
from src.config import content_parameters, load_config
from src.data.data_processor import CloudProcessor
from src.data.ply_io import read_ply, write_ply
from src.errors import CloudGaugeError, DataError
from src.metrics.geometry_metrics import MetricOptions, compare, parse_families, po2point_errors
from src.metrics.pooling import error_histogram
from src.metrics.report import DIRECTIONS
from src.normals.normal_estimator import NormalEstimator
from src.run_evaluation import run_evaluation
from src.run_stats import run_stats
from src.transfer.recolor import recolor

logger = logging.getLogger(__name__)

DATA_EXIT = 3


def cmd_encode(args):
    precision, depth = args.precision, args.depth
    if args.content:
        params = content_parameters(args.content)
        if params is None:
            raise DataError(f"unknown content {args.content!r} in dataset.json")
        precision = precision or params['precision']
        if depth is None:
            if args.quality is None:
                raise DataError("--content needs --quality (L, M or H) when --depth is not given")
            depth = params['pcl_depth'][args.quality]
    if depth is None:
        depth = load_config()['codec']['default_depth']

    cloud = read_ply(args.input, precision=precision)
    if precision is not None and not cloud.voxelized:
        cloud = CloudProcessor().voxelize(cloud, precision)

    codec = OctreeCodec()
    stream = codec.encode(cloud, depth, entropy_mode=args.entropy)
    write_stream(stream, args.output)
    total_bits, bpp = codec.rate_bits(stream)
    print(f"leaf_size={stream.leaf_size:g} total_bits={total_bits} bits_per_point={bpp:.6f}")


def cmd_decode(args):
    stream = read_stream(args.input)
    cloud = OctreeCodec().decode(stream)
    write_ply(cloud, args.output, format=args.format)
    print(f"decoded_points={len(cloud)}")


def cmd_recolor(args):
    reference = read_ply(args.reference)
    degraded = read_ply(args.degraded)
    write_ply(recolor(reference, degraded, k=args.k), args.output, format=args.format)


def cmd_normals(args):
    cloud = read_ply(args.input)
    estimator = NormalEstimator(radius_multiplier=args.radius_multiplier)
    with_normals, normal_field = estimator.calculate(cloud, radius=args.radius, orient=not args.no_orient)
    write_ply(with_normals, args.output, format=args.format)
    print(f"radius={normal_field.radius:g} valid={normal_field.valid_count}/{len(normal_field)}")


def cmd_compare(args):
    reference = read_ply(args.reference, precision=args.precision)
    degraded = read_ply(args.degraded, precision=args.precision)
    options = MetricOptions.from_config(
        families=parse_families(args.metrics), k_avg=args.k_avg, radius_multiplier=args.radius_multiplier,
        po2plane_normal_source=args.normal_source, precision=args.precision,
    )
    report = compare(reference, degraded, options)

    if args.output:
        report.write_json(args.output)
    else:
        print(report.to_json())

    if args.hist:
        stem = os.path.splitext(args.output)[0] if args.output else 'compare'
        for direction in DIRECTIONS:
            errors = po2point_errors(reference, degraded, direction)
            tag = direction.replace('->', '')
            path = f"{stem}_po2point_hist_{tag}.csv"
            error_histogram(errors, bins=args.hist).to_csv(path, index=False)
            logger.info(f"Wrote {direction} histogram to {path}")


def cmd_evaluate(args):
    run_evaluation(args.manifest, output_dir=args.output_dir, families=parse_families(args.metrics),
                   k_avg=args.k_avg, radius_multiplier=args.radius_multiplier, precision=args.precision,
                   progress=not args.quiet)


def cmd_stats(args):
    run_stats(args.scores, residuals_path=args.residuals, alpha=args.alpha, f_alpha=args.f_alpha,
              output_dir=args.output_dir)


def build_parser():
    parser = argparse.ArgumentParser(prog='cloudgauge', description="Point cloud geometry quality toolkit")
    parser.add_argument('--verbose', action='store_true', help="debug logging")
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('encode', help="octree-encode a PLY file")
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--depth', type=int, default=None)
    p.add_argument('--entropy', choices=['raw', 'range'], default=None)
    p.add_argument('--precision', type=int, default=None)
    p.add_argument('--content', default=None)
    p.add_argument('--quality', choices=['L', 'M', 'H'], default=None)
    p.set_defaults(handler=cmd_encode)

    p = commands.add_parser('decode', help="decode an octree stream to PLY")
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--format', choices=['ascii', 'binary_le'], default='binary_le')
    p.set_defaults(handler=cmd_decode)

    p = commands.add_parser('recolor', help="transfer reference colours onto a degraded cloud")
    p.add_argument('reference')
    p.add_argument('degraded')
    p.add_argument('output')
    p.add_argument('--k', type=int, default=1)
    p.add_argument('--format', choices=['ascii', 'binary_le'], default='binary_le')
    p.set_defaults(handler=cmd_recolor)

    p = commands.add_parser('normals', help="estimate and orient normals")
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--radius', type=float, default=None)
    p.add_argument('--radius-multiplier', type=float, default=None)
    p.add_argument('--no-orient', action='store_true')
    p.add_argument('--format', choices=['ascii', 'binary_le'], default='binary_le')
    p.set_defaults(handler=cmd_normals)

    p = commands.add_parser('compare', help="full-reference geometry scores")
    p.add_argument('reference')
    p.add_argument('degraded')
    p.add_argument('--metrics', default='all')
    p.add_argument('--output', default=None)
    p.add_argument('--hist', type=int, nargs='?', default=None, metavar='BINS',
                   const=load_config()['metrics']['histogram_bins'])
    p.add_argument('--k-avg', type=int, default=None)
    p.add_argument('--radius-multiplier', type=float, default=None)
    p.add_argument('--precision', type=int, default=None)
    p.add_argument('--normal-source', choices=['reference', 'target'], default=None)
    p.set_defaults(handler=cmd_compare)

    p = commands.add_parser('evaluate', help="scores and PLCC for a manifest")
    p.add_argument('manifest')
    p.add_argument('--output-dir', default=None)
    p.add_argument('--metrics', default='all')
    p.add_argument('--k-avg', type=int, default=None)
    p.add_argument('--radius-multiplier', type=float, default=None)
    p.add_argument('--precision', type=int, default=None)
    p.add_argument('--quiet', action='store_true', help="no progress bar")
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser('stats', help="MOS significance tests and residual F-tests")
    p.add_argument('scores')
    p.add_argument('--residuals', default=None)
    p.add_argument('--alpha', type=float, default=None)
    p.add_argument('--f-alpha', type=float, default=None)
    p.add_argument('--output-dir', default=None)
    p.set_defaults(handler=cmd_stats)

    return parser


def main(argv=None):
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='[%(asctime)s] [%(levelname)s] %(message)s',
        datefmt='%H:%M:%S',
        stream=sys.stderr,
    )

    try:
        args.handler(args)
    except CloudGaugeError as e:
        logger.error(str(e))
        return e.exit_code
    except FileNotFoundError as e:
        logger.error(str(e))
        return DATA_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
