import logging

import numpy as np

from src.codec.range_coder import SymbolReader, encode_bytes
from src.codec.stream import ENTROPY_MODES, HEADER_BYTES, MAX_DEPTH, OctreeStream
from src.config import load_config
from src.data.data_processor import CloudProcessor
from src.data.point_cloud import PointCloud, is_on_grid
from src.errors import DataError, StreamFormatError

logger = logging.getLogger(__name__)


def morton_encode(ijk, depth):
    """Interleave leaf coordinates, x taking the most significant bit of each level"""
    ijk = ijk.astype(np.uint64)
    codes = np.zeros(len(ijk), dtype=np.uint64)
    for bit in range(depth):
        shift = np.uint64(bit)
        for axis in range(3):
            plane = (ijk[:, axis] >> shift) & np.uint64(1)
            codes |= plane << np.uint64(3 * bit + 2 - axis)
    return codes


def morton_decode(codes, depth):
    ijk = np.zeros((len(codes), 3), dtype=np.int64)
    for bit in range(depth):
        for axis in range(3):
            plane = (codes >> np.uint64(3 * bit + 2 - axis)) & np.uint64(1)
            ijk[:, axis] |= plane.astype(np.int64) << bit
    return ijk


class OctreeCodec:
    """Geometry-only octree coder producing one occupancy byte per occupied node"""

    def __init__(self, processor=None, entropy_mode=None):
        self.processor = processor or CloudProcessor()
        self.entropy_mode = entropy_mode or load_config()['codec']['entropy_mode']

    def root_cube(self, cloud):
        """(origin, side): the 2^pr grid for voxelized clouds, else the bounding cube"""
        if cloud.voxelized and cloud.precision is not None:
            return np.zeros(3), float(2 ** cloud.precision)
        cube = self.processor.bounding_cube(cloud)
        return cube.origin, cube.side

    def encode(self, cloud, depth, entropy_mode=None):
        depth = int(depth)
        entropy_mode = entropy_mode or self.entropy_mode
        if not 1 <= depth <= MAX_DEPTH:
            raise DataError(f"octree depth must be in [1, {MAX_DEPTH}], got {depth}")
        if entropy_mode not in ENTROPY_MODES:
            raise DataError(f"entropy mode must be one of {sorted(ENTROPY_MODES)}, got {entropy_mode!r}")
        if len(cloud) == 0:
            raise DataError("cannot encode an empty cloud")

        origin, side = self.root_cube(cloud)
        leaf = side / 2 ** depth
        ijk = np.floor((cloud.points - origin) / leaf).astype(np.int64)
        # points on the maximum face belong to the last leaf
        ijk = np.clip(ijk, 0, 2 ** depth - 1)
        leaves = np.unique(morton_encode(ijk, depth))

        payload = self._occupancy_bytes(leaves, depth)
        if entropy_mode == 'range':
            coded = encode_bytes(payload)
            logger.info(f"Range coded {len(payload)} occupancy bytes into {len(coded)}")
            payload = coded

        logger.info(f"Encoded {len(cloud)} points into {len(leaves)} leaves at depth {depth} (leaf {leaf:.6g})")
        return OctreeStream(origin=origin, side=side, depth=depth, entropy_mode=entropy_mode,
                            point_count=len(cloud), payload=bytes(payload))

    def decode(self, stream):
        """One point per occupied leaf, at its centre; no attributes"""
        if len(stream.payload) == 0:
            raise StreamFormatError("empty payload")

        if stream.entropy_mode == 'range':
            reader = SymbolReader(stream.payload)
        else:
            reader = _RawReader(stream.payload)

        codes = np.zeros(1, dtype=np.uint64)
        offset = 0
        for level in range(stream.depth):
            occupancy = reader.read(len(codes))
            zero = np.flatnonzero(occupancy == 0)
            if len(zero):
                raise StreamFormatError(f"zero occupancy byte at node {offset + zero[0]} (level {level})")
            offset += len(codes)

            bits = np.unpackbits(occupancy[:, None], axis=1, bitorder='little')
            parent, child = np.nonzero(bits)
            codes = (codes[parent] << np.uint64(3)) | child.astype(np.uint64)

        if not reader.exhausted:
            raise StreamFormatError("trailing bytes after the last octree level")

        leaf = stream.leaf_size
        centres = stream.origin + (morton_decode(codes, stream.depth) + 0.5) * leaf
        precision = self.stream_precision(stream)
        voxelized = precision is not None and is_on_grid(centres, precision)

        logger.info(f"Decoded {len(centres)} points from depth {stream.depth} stream")
        return PointCloud(points=centres, precision=precision, voxelized=voxelized)

    @staticmethod
    def stream_precision(stream):
        """log2(side) for a grid-rooted stream, otherwise None"""
        if np.any(stream.origin != 0):
            return None
        exponent = np.log2(stream.side)
        if stream.side >= 2 and exponent == np.floor(exponent):
            return int(exponent)
        return None

    @staticmethod
    def rate_bits(stream):
        """
        Rate of a stream

        Returns:
            (total_bits including the header, bits per input point)
        """
        if len(stream.payload) == 0:
            raise StreamFormatError("empty payload has no rate")
        if stream.point_count == 0:
            raise StreamFormatError("stream records zero input points")
        total_bits = (HEADER_BYTES + len(stream.payload)) * 8
        return total_bits, total_bits / stream.point_count

    @staticmethod
    def _occupancy_bytes(leaves, depth):
        chunks = []
        for level in range(depth):
            children = np.unique(leaves >> np.uint64(3 * (depth - level - 1)))
            parents = children >> np.uint64(3)
            bits = np.left_shift(1, (children & np.uint64(7)).astype(np.int64)).astype(np.uint8)
            starts = np.flatnonzero(np.r_[True, parents[1:] != parents[:-1]])
            chunks.append(np.bitwise_or.reduceat(bits, starts))
        return np.concatenate(chunks).tobytes()


class _RawReader:
    def __init__(self, payload):
        self.data = np.frombuffer(payload, dtype=np.uint8)
        self.pos = 0

    def read(self, count):
        if self.pos + count > len(self.data):
            raise StreamFormatError(
                f"payload truncated: needs {self.pos + count} occupancy bytes, has {len(self.data)}"
            )
        out = self.data[self.pos:self.pos + count]
        self.pos += count
        return out

    @property
    def exhausted(self):
        return self.pos == len(self.data)
