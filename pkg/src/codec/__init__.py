from .octree_codec import OctreeCodec
from .stream import OctreeStream, read_stream, write_stream

__all__ = ['OctreeCodec', 'OctreeStream', 'read_stream', 'write_stream']
