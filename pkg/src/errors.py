"""Exception hierarchy shared by the toolkit; the CLI maps families to exit codes."""


class CloudGaugeError(Exception):
    exit_code = 1


class DataError(CloudGaugeError, ValueError):
    """Bad or missing input data"""
    exit_code = 3


class PlyFormatError(DataError):
    """PLY file that cannot be parsed; position is a line number (header/ascii) or byte offset"""

    def __init__(self, message, path=None, position=None):
        self.path = path
        self.position = position
        where = []
        if path is not None:
            where.append(str(path))
        if position is not None:
            where.append(str(position))
        prefix = f"{': '.join(where)}: " if where else ''
        super().__init__(f"{prefix}{message}")


class StreamFormatError(DataError):
    """Malformed or truncated octree bitstream"""


class ManifestError(DataError):
    """Manifest or score CSV that violates its schema"""


class NumericError(CloudGaugeError, ArithmeticError):
    """Numerical procedure failed or produced unusable output"""
    exit_code = 4


class FitError(NumericError):
    pass


class NormalEstimationError(NumericError):
    pass
