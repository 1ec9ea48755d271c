import numpy as np
import pytest

from src.codec import octree_codec
from src.codec.octree_codec import OctreeCodec, morton_decode, morton_encode
from src.codec.stream import HEADER_BYTES, OctreeStream, read_stream, write_stream
from src.config import load_config
from src.data.point_cloud import PointCloud
from src.errors import DataError, StreamFormatError
from src.metrics.geometry_metrics import MetricOptions, compare
from src.search.spatial_index import SpatialIndex


@pytest.fixture
def codec():
    return OctreeCodec()


def _stream(payload, depth=1, side=8.0, mode='raw'):
    return OctreeStream(origin=(0.0, 0.0, 0.0), side=side, depth=depth, entropy_mode=mode,
                        point_count=2, payload=payload)


def _sorted_rows(points):
    points = np.asarray(points)
    return points[np.lexsort(points.T[::-1])]


def test_two_opposite_children(codec):
    decoded = codec.decode(_stream(bytes([0b10000001])))
    assert np.array_equal(decoded.points, [[2.0, 2.0, 2.0], [6.0, 6.0, 6.0]])
    assert decoded.precision == 3
    assert not decoded.has_colors


def test_encoder_writes_the_same_byte(codec):
    cloud = PointCloud(points=[[6.0, 6.0, 6.0], [2.0, 2.0, 2.0]], precision=3, voxelized=True)
    stream = codec.encode(cloud, 1)
    assert stream.payload == bytes([0b10000001])
    assert stream.side == 8.0 and stream.point_count == 2


@pytest.mark.parametrize('mode', ['raw', 'range'])
def test_full_depth_keeps_every_voxel(voxel_cloud, codec, mode):
    decoded = codec.decode(codec.encode(voxel_cloud, 10, entropy_mode=mode))

    assert len(decoded) == len(voxel_cloud)
    assert np.array_equal(_sorted_rows(decoded.points - 0.5), _sorted_rows(voxel_cloud.points))


def test_raw_and_range_decode_identically(voxel_cloud, codec):
    raw = codec.decode(codec.encode(voxel_cloud, 6, entropy_mode='raw'))
    ranged = codec.decode(codec.encode(voxel_cloud, 6, entropy_mode='range'))
    assert raw == ranged


@pytest.mark.parametrize('depth', [2, 5, 8])
def test_round_trip_within_half_leaf_diagonal(voxel_cloud, codec, depth):
    stream = codec.encode(voxel_cloud, depth)
    decoded = codec.decode(stream)
    bound = stream.leaf_size * np.sqrt(3) / 2 + 1e-9

    _, forward = SpatialIndex(decoded.points).nearest_many(voxel_cloud.points)
    _, backward = SpatialIndex(voxel_cloud.points).nearest_many(decoded.points)
    assert np.sqrt(forward.max()) <= bound
    assert np.sqrt(backward.max()) <= bound
    assert len(decoded) <= len(voxel_cloud)


def test_non_voxelized_cloud_uses_bounding_cube(codec):
    cloud = PointCloud(points=[[-1.5, 0.25, 3.0], [2.5, 0.25, 3.0]])
    stream = codec.encode(cloud, 1)

    assert np.array_equal(stream.origin, [-1.5, 0.25, 3.0])
    assert stream.side == 4.0
    decoded = codec.decode(stream)
    assert decoded.precision is None
    assert np.allclose(decoded.points, [[-0.5, 1.25, 4.0], [1.5, 1.25, 4.0]])


def test_morton_codes_invert(rng):
    ijk = rng.integers(0, 2 ** 12, size=(200, 3))
    assert np.array_equal(morton_decode(morton_encode(ijk, 12), 12), ijk)
    # x is the most significant bit of each level
    assert morton_encode(np.array([[1, 0, 0]]), 1)[0] == 4


@pytest.mark.parametrize('payload, depth, message', [
    (bytes([0b10000001]), 2, "truncated"),
    (bytes([0]), 1, "zero occupancy"),
    (bytes([1, 1]), 1, "trailing"),
    (b'', 1, "empty"),
])
def test_malformed_payloads(codec, payload, depth, message):
    with pytest.raises(StreamFormatError, match=message):
        codec.decode(_stream(payload, depth=depth))


def test_truncated_range_payload(voxel_cloud, codec):
    stream = codec.encode(voxel_cloud, 8, entropy_mode='range')
    damaged = OctreeStream(origin=stream.origin, side=stream.side, depth=stream.depth,
                           entropy_mode='range', point_count=stream.point_count,
                           payload=stream.payload[:len(stream.payload) // 2])
    with pytest.raises(StreamFormatError):
        codec.decode(damaged)


def test_stream_file_round_trip(voxel_cloud, codec, tmp_path):
    stream = codec.encode(voxel_cloud, 7, entropy_mode='range')
    path = str(tmp_path / 'cloud.ocq')
    write_stream(stream, path)

    loaded = read_stream(path)
    assert loaded.payload == stream.payload
    assert loaded.depth == 7 and loaded.entropy_mode == 'range'
    assert loaded.point_count == len(voxel_cloud)
    assert np.array_equal(loaded.origin, stream.origin)


def test_stream_header_errors(voxel_cloud, codec):
    data = codec.encode(voxel_cloud, 4).to_bytes()
    with pytest.raises(StreamFormatError, match="magic"):
        OctreeStream.from_bytes(b'XXXX' + data[4:])
    with pytest.raises(StreamFormatError, match="truncated"):
        OctreeStream.from_bytes(data[:HEADER_BYTES - 1])
    with pytest.raises(StreamFormatError, match="truncated"):
        OctreeStream.from_bytes(data[:-1])
    with pytest.raises(StreamFormatError, match="trailing"):
        OctreeStream.from_bytes(data + b'\x00')


def test_rate_counts_header_and_payload(voxel_cloud, codec):
    stream = codec.encode(voxel_cloud, 5)
    total_bits, bpp = codec.rate_bits(stream)
    assert total_bits == (HEADER_BYTES + len(stream.payload)) * 8
    assert bpp == pytest.approx(total_bits / len(voxel_cloud))


def test_encode_rejects_bad_arguments(voxel_cloud, codec):
    with pytest.raises(DataError):
        codec.encode(voxel_cloud, 0)
    with pytest.raises(DataError):
        codec.encode(voxel_cloud, 22)
    with pytest.raises(DataError):
        codec.encode(voxel_cloud, 4, entropy_mode='zip')
    with pytest.raises(DataError):
        codec.encode(PointCloud(points=np.empty((0, 3))), 4)


def _voxels(points, precision):
    return PointCloud(points=np.asarray(points, dtype=np.float64), precision=precision, voxelized=True)


@pytest.mark.parametrize('points, precision, depth, payload', [
    ([[0, 0, 0], [3, 3, 3], [1, 0, 0]], 2, 2, bytes([0x81, 0x11, 0x80])),
    ([[5, 2, 7]], 3, 3, bytes([0x20, 0x08, 0x20])),
    ([[5, 2, 7]], 3, 2, bytes([0x20, 0x08])),
    ([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], 1, 1, bytes([0xFF])),
])
def test_raw_payloads_by_hand(codec, points, precision, depth, payload):
    stream = codec.encode(_voxels(points, precision), depth, entropy_mode='raw')
    assert stream.payload == payload


@pytest.mark.parametrize('mode', ['raw', 'range'])
def test_encoding_is_deterministic(voxel_cloud, rng, mode):
    first = OctreeCodec().encode(voxel_cloud, 7, entropy_mode=mode).to_bytes()
    second = OctreeCodec().encode(voxel_cloud, 7, entropy_mode=mode).to_bytes()
    shuffled = voxel_cloud.replace(points=rng.permutation(voxel_cloud.points), colors=None)
    third = OctreeCodec().encode(shuffled, 7, entropy_mode=mode).to_bytes()

    assert first == second == third


def _cube(size=8):
    grid = np.stack(np.meshgrid(*[np.arange(size)] * 3, indexing='ij'), axis=-1).reshape(-1, 3)
    return _voxels(grid, int(np.log2(size)))


@pytest.mark.parametrize('cloud_name', ['voxel_cloud', 'plane_cloud', 'cube'])
def test_distortion_grows_as_depth_shrinks(codec, request, cloud_name):
    cloud = _cube() if cloud_name == 'cube' else request.getfixturevalue(cloud_name)
    options = MetricOptions(families=('po2point',), precision=cloud.precision)

    mse = []
    for depth in range(cloud.precision, 0, -1):
        decoded = codec.decode(codec.encode(cloud, depth))
        mse.append(compare(cloud, decoded, options).po2point['mse'])

    assert all(finer <= coarser for finer, coarser in zip(mse, mse[1:]))
    assert mse[-1] > mse[0]


def test_cube_distortion_by_depth(codec):
    cube = _cube()
    options = MetricOptions(families=('po2point',), precision=3)
    raw = {depth: compare(cube, codec.decode(codec.encode(cube, depth)), options).po2point['mse'] * 49
           for depth in (3, 2, 1)}
    assert raw == pytest.approx({3: 0.75, 2: 1.5, 1: 4.5})


def test_default_entropy_mode_comes_from_config(voxel_cloud, monkeypatch):
    assert OctreeCodec().entropy_mode == load_config()['codec']['entropy_mode']

    def range_config(name='toolkit_config.json'):
        config = load_config(name)
        config['codec']['entropy_mode'] = 'range'
        return config

    monkeypatch.setattr(octree_codec, 'load_config', range_config)
    codec = OctreeCodec()
    assert codec.encode(voxel_cloud, 4).entropy_mode == 'range'
    assert codec.encode(voxel_cloud, 4, entropy_mode='raw').entropy_mode == 'raw'
