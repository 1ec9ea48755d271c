import logging
import os

import numpy as np
from plyfile import PlyData, PlyElement, PlyElementParseError, PlyHeaderParseError

from src.config import load_config
from src.data.point_cloud import PointCloud, is_on_grid, minimum_precision
from src.errors import DataError, PlyFormatError

logger = logging.getLogger(__name__)

POSITION_PROPS = ('x', 'y', 'z')
COLOR_PROPS = ('red', 'green', 'blue')
NORMAL_PROPS = ('nx', 'ny', 'nz')
# 0 marks a placeholder normal that could not be estimated
VALID_PROP = 'normal_valid'

FLOAT_KINDS = {'f'}
POSITION_KINDS = {'f', 'i', 'u'}
MAX_HEADER_LINES = 1000


def read_ply(path, precision=None):
    """
    Read a PLY vertex element into a PointCloud

    Args:
        path: PLY file (ascii or binary_little_endian)
        precision: coordinate bit depth; inferred for integral clouds when None

    Returns:
        PointCloud with one point per vertex record, in file order
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"PLY file not found: {path}")

    header_lines, header_bytes = _scan_header(path)
    _check_format(path, header_lines)

    try:
        ply = PlyData.read(path, mmap=False)
    except PlyHeaderParseError as e:
        raise PlyFormatError(f"malformed header: {e.message}", path, f"line {e.line}") from e
    except PlyElementParseError as e:
        raise PlyFormatError(
            f"{e.message} in element '{getattr(e.element, 'name', '?')}'",
            path,
            _row_position(ply_header=header_lines, header_bytes=header_bytes, error=e),
        ) from e
    except ValueError as e:
        raise PlyFormatError(f"unreadable body: {e}", path) from e

    if 'vertex' not in ply:
        raise PlyFormatError("no 'vertex' element", path, 'header')
    vertex = ply['vertex']
    names = [prop.name for prop in vertex.properties]

    for prop in vertex.properties:
        if prop.name not in POSITION_PROPS + COLOR_PROPS + NORMAL_PROPS + (VALID_PROP,):
            logger.warning(f"Skipping unknown vertex property '{prop.name}' in {path}")

    missing = [name for name in POSITION_PROPS if name not in names]
    if missing:
        raise PlyFormatError(f"vertex element lacks properties {missing}", path, 'header')

    props = {prop.name: prop for prop in vertex.properties}
    _check_types(path, props, POSITION_PROPS, POSITION_KINDS, 'float or double')
    data = vertex.data

    points = np.column_stack([np.asarray(data[name], dtype=np.float64) for name in POSITION_PROPS])

    colors = None
    if all(name in names for name in COLOR_PROPS):
        for name in COLOR_PROPS:
            if np.dtype(props[name].val_dtype) != np.uint8:
                raise PlyFormatError(f"property '{name}' must be uchar, got {props[name].val_dtype}", path, 'header')
        colors = np.column_stack([np.asarray(data[name], dtype=np.uint8) for name in COLOR_PROPS])
    elif any(name in names for name in COLOR_PROPS):
        logger.warning(f"Ignoring incomplete color properties in {path}")

    normals = None
    normal_valid = None
    if all(name in names for name in NORMAL_PROPS):
        _check_types(path, props, NORMAL_PROPS, FLOAT_KINDS, 'float or double')
        normals = np.column_stack([np.asarray(data[name], dtype=np.float64) for name in NORMAL_PROPS])
        normals = _unit_normals(normals, path)
        if VALID_PROP in names:
            normal_valid = np.asarray(data[VALID_PROP]) != 0
    elif any(name in names for name in NORMAL_PROPS):
        logger.warning(f"Ignoring incomplete normal properties in {path}")

    if precision is None:
        precision = minimum_precision(points)
    voxelized = precision is not None and len(points) > 0 and is_on_grid(points, precision)

    logger.info(f"Read {len(points)} points from {path}")
    return PointCloud(points=points, colors=colors, normals=normals,
                      precision=precision, voxelized=voxelized, normal_valid=normal_valid)


def write_ply(cloud, path, format='binary_le'):
    """Write a PointCloud as PLY ('ascii' or 'binary_le')"""
    if len(cloud) == 0:
        raise DataError("cannot write an empty cloud")
    if format not in ('ascii', 'binary_le'):
        raise DataError(f"unsupported PLY output format: {format}")

    fields = [(name, 'f8') for name in POSITION_PROPS]
    if cloud.has_colors:
        fields += [(name, 'u1') for name in COLOR_PROPS]
    if cloud.has_normals:
        fields += [(name, 'f8') for name in NORMAL_PROPS]
    if cloud.normal_valid is not None:
        fields.append((VALID_PROP, 'u1'))

    vertex = np.empty(len(cloud), dtype=fields)
    for axis, name in enumerate(POSITION_PROPS):
        vertex[name] = cloud.points[:, axis]
    if cloud.has_colors:
        for axis, name in enumerate(COLOR_PROPS):
            vertex[name] = cloud.colors[:, axis]
    if cloud.has_normals:
        for axis, name in enumerate(NORMAL_PROPS):
            vertex[name] = cloud.normals[:, axis]
    if cloud.normal_valid is not None:
        vertex[VALID_PROP] = cloud.normal_valid

    element = PlyElement.describe(vertex, 'vertex')
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    try:
        if format == 'binary_le':
            PlyData([element], text=False, byte_order='<').write(path)
        else:
            _write_ascii(element, cloud, path)
    except OSError as e:
        logger.error(f"Error writing PLY {path}: {e}")
        raise

    logger.info(f"Wrote {len(cloud)} points to {path} ({format})")


def _write_ascii(element, cloud, path):
    # plyfile's text writer uses 18 significant digits; the body is written here instead
    header = PlyData([element], text=True).header
    float_format = f"%.{load_config()['geometry']['ascii_significant_digits']}g"
    columns = [cloud.points]
    formats = [float_format] * 3
    if cloud.has_colors:
        columns.append(cloud.colors.astype(np.float64))
        formats += ['%d'] * 3
    if cloud.has_normals:
        columns.append(cloud.normals)
        formats += [float_format] * 3
    if cloud.normal_valid is not None:
        columns.append(cloud.normal_valid.astype(np.float64)[:, None])
        formats.append('%d')
    body = np.hstack(columns)
    with open(path, 'w', newline='\n') as f:
        f.write(header + '\n')
        np.savetxt(f, body, fmt=formats, delimiter=' ')


def _scan_header(path):
    """Raw header lines and header size in bytes, without parsing the body"""
    lines = []
    size = 0
    with open(path, 'rb') as f:
        for _ in range(MAX_HEADER_LINES):
            raw = f.readline()
            if not raw:
                raise PlyFormatError("malformed header: missing 'end_header'", path, f"line {len(lines) + 1}")
            size += len(raw)
            line = raw.decode('ascii', errors='replace').strip()
            lines.append(line)
            if line == 'end_header':
                return lines, size
    raise PlyFormatError("malformed header: 'end_header' not found", path, f"line {MAX_HEADER_LINES}")


def _check_format(path, header_lines):
    if not header_lines or header_lines[0] != 'ply':
        raise PlyFormatError("malformed header: missing 'ply' magic", path, 'line 1')
    for number, line in enumerate(header_lines, start=1):
        if line.startswith('format'):
            parts = line.split()
            if len(parts) != 3:
                raise PlyFormatError(f"malformed header: bad format line '{line}'", path, f"line {number}")
            if parts[1] == 'binary_big_endian':
                raise PlyFormatError("unsupported format binary_big_endian", path, f"line {number}")
            if parts[1] not in ('ascii', 'binary_little_endian'):
                raise PlyFormatError(f"malformed header: unknown format '{parts[1]}'", path, f"line {number}")
            return
    raise PlyFormatError("malformed header: no format line", path, 'line 2')


def _check_types(path, props, names, kinds, expected):
    for name in names:
        prop = props[name]
        if not hasattr(prop, 'val_dtype') or hasattr(prop, 'len_dtype'):
            raise PlyFormatError(f"property '{name}' must be a scalar {expected}", path, 'header')
        if np.dtype(prop.val_dtype).kind not in kinds:
            raise PlyFormatError(f"property '{name}' must be {expected}, got {prop.val_dtype}", path, 'header')


def _row_position(ply_header, header_bytes, error):
    """Line (ascii) or byte offset (binary) of the failing vertex row"""
    row = getattr(error, 'row', None)
    if row is None:
        return None
    element_name = getattr(error.element, 'name', None)
    is_ascii = any(line.startswith('format ascii') for line in ply_header)

    preceding = 0
    record_bytes = None
    for line in ply_header:
        parts = line.split()
        if len(parts) == 3 and parts[0] == 'element':
            if parts[1] == element_name:
                break
            preceding = None if not is_ascii else preceding + int(parts[2])
        if preceding is None:
            break
    if is_ascii and preceding is not None:
        return f"line {len(ply_header) + preceding + row + 1}"

    if element_name == 'vertex' and preceding == 0 and hasattr(error.element, 'dtype'):
        try:
            record_bytes = error.element.dtype('<').itemsize
        except Exception:
            record_bytes = None
    if record_bytes is not None:
        return f"byte {header_bytes + row * record_bytes}"
    return f"row {row}"


def _unit_normals(normals, path):
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(lengths == 0):
        raise PlyFormatError("zero-length normal vector", path, None)
    if np.any(np.abs(lengths - 1.0) > 1e-6):
        logger.warning(f"Renormalizing non-unit normals in {path}")
        normals = normals / lengths[:, None]
    return normals
