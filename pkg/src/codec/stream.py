import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from src.errors import StreamFormatError

logger = logging.getLogger(__name__)

MAGIC = b'OCQ1'
# magic, origin xyz, side, depth, entropy mode, point count, payload length
HEADER = struct.Struct('<4s3ddBBQQ')
HEADER_BYTES = HEADER.size

MAX_DEPTH = 21
ENTROPY_MODES = {'raw': 0, 'range': 1}
ENTROPY_NAMES = {code: name for name, code in ENTROPY_MODES.items()}


@dataclass(frozen=True)
class OctreeStream:
    """
    Occupancy-coded octree

    payload holds one nonzero occupancy byte per occupied node at depths
    0..depth-1 in breadth-first order, optionally range coded.
    """
    origin: np.ndarray
    side: float
    depth: int
    entropy_mode: str
    point_count: int
    payload: bytes

    def __post_init__(self):
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        origin.setflags(write=False)
        object.__setattr__(self, 'origin', origin)
        if not 1 <= self.depth <= MAX_DEPTH:
            raise StreamFormatError(f"octree depth must be in [1, {MAX_DEPTH}], got {self.depth}")
        if self.entropy_mode not in ENTROPY_MODES:
            raise StreamFormatError(f"unknown entropy mode {self.entropy_mode!r}")
        if not self.side > 0:
            raise StreamFormatError(f"root cube side must be positive, got {self.side}")

    @property
    def leaf_size(self):
        return self.side / 2 ** self.depth

    def to_bytes(self):
        header = HEADER.pack(
            MAGIC, *self.origin, self.side, self.depth,
            ENTROPY_MODES[self.entropy_mode], self.point_count, len(self.payload),
        )
        return header + bytes(self.payload)

    @classmethod
    def from_bytes(cls, data):
        if len(data) < HEADER_BYTES:
            raise StreamFormatError(f"stream truncated: {len(data)} bytes, header needs {HEADER_BYTES}")

        magic, ox, oy, oz, side, depth, mode, point_count, length = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if mode not in ENTROPY_NAMES:
            raise StreamFormatError(f"unknown entropy mode code {mode}")

        payload = data[HEADER_BYTES:]
        if len(payload) < length:
            raise StreamFormatError(f"payload truncated: header declares {length} bytes, found {len(payload)}")
        if len(payload) > length:
            raise StreamFormatError(f"{len(payload) - length} trailing bytes after payload")

        return cls(origin=(ox, oy, oz), side=side, depth=depth, entropy_mode=ENTROPY_NAMES[mode],
                   point_count=point_count, payload=bytes(payload))


def write_stream(stream, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(stream.to_bytes())
    logger.info(f"Wrote {HEADER_BYTES + len(stream.payload)} byte stream to {path}")


def read_stream(path):
    if not os.path.exists(path):
        logger.error(f"Stream file not found: {path}")
        raise FileNotFoundError(f"Stream file not found: {path}")
    with open(path, 'rb') as f:
        data = f.read()
    try:
        return OctreeStream.from_bytes(data)
    except StreamFormatError as e:
        logger.error(f"Invalid stream {path}: {e}")
        raise
