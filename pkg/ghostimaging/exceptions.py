"""Errors raised by the ghostimaging library.

Management commands turn any ``GhostLabError`` into a ``CommandError``.
"""


class GhostLabError(Exception):
    """Base class for every error raised by ghostimaging."""


class GisFormatError(GhostLabError, ValueError):
    """A GIS1 buffer or meta block is malformed."""


class TruncationError(GisFormatError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f'truncated GIS1 payload: expected {expected} bytes, got {actual}')


class QuantizationRangeError(GhostLabError, ValueError):
    def __init__(self, frame: int, row: int, column: int, value: float):
        self.frame = frame
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f'value {value!r} at frame {frame}, row {row}, column {column} '
            f'is not a 16-bit unsigned integer'
        )


class BoundsError(GhostLabError, IndexError):
    """A region or displacement leaves the sensor."""


class ConfigError(GhostLabError, ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = ''
        if line is not None:
            prefix += f'line {line}: '
        if key is not None:
            prefix += f'{key}: '
        super().__init__(prefix + message)


class GeometryError(GhostLabError, ValueError):
    """Mask geometry does not fit the requested dimensions."""


class UsageError(GhostLabError, TypeError):
    """An operation was called with the wrong arity or arguments."""


class AlignmentError(GhostLabError, ValueError):
    """Arms disagree on frame count or region dimensions."""


class RegistrationError(GhostLabError):
    """A correlation map holds no defined value."""


class MetricError(GhostLabError, ValueError):
    def __init__(self, message: str, region: str | None = None):
        self.region = region
        super().__init__(f'{region} region: {message}' if region else message)
