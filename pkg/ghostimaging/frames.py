"""
Frame stacks, regions and the GIS1 file format.

A ``FrameStack`` holds the intensity records of one arm as a read-only
``(frame, row, column)`` float64 array. On disk stacks are GIS1 files: a
24-byte little-endian header, a UTF-8 ``key=value`` meta block and a u16
payload, frame-major then row-major.
"""
import logging
import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .exceptions import BoundsError, GisFormatError, QuantizationRangeError, TruncationError
from .files import atomic_write

logger = logging.getLogger(__name__)

GIS_MAGIC = b'GIS1'
GIS_VERSION = 1
GIS_DTYPE_U16 = 1
GIS_HEADER = struct.Struct('<4sBBHIIII')
U16_MAX = 65535


@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel window: ``x0`` is the column, ``y0`` the row."""
    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        for name in ('x0', 'y0', 'width', 'height'):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f'region {name} must be an integer, got {value!r}')
            object.__setattr__(self, name, int(value))
        if self.x0 < 0 or self.y0 < 0:
            raise BoundsError(f'region origin ({self.x0}, {self.y0}) is negative')
        if self.width < 1 or self.height < 1:
            raise ValueError(f'region size {self.width}x{self.height} must be at least 1x1')

    @classmethod
    def parse(cls, text: str) -> 'Region':
        """Parse ``"x0,y0,width,height"``."""
        parts = [p.strip() for p in str(text).split(',')]
        if len(parts) != 4:
            raise ValueError(f'expected "x0,y0,width,height", got {text!r}')
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise ValueError(f'invalid region {text!r}: {exc}') from exc

    @property
    def x1(self) -> int:
        """One past the last column."""
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + (self.width - 1) / 2, self.y0 + (self.height - 1) / 2)

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def slices(self) -> tuple[slice, slice]:
        """Row and column slices for indexing a ``(row, column)`` array."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def fits(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def require_inside(self, width: int, height: int, what: str = 'region'):
        if not self.fits(width, height):
            raise BoundsError(f'{what} {self} exceeds the {width}x{height} sensor')

    def __str__(self):
        return f'{self.x0},{self.y0},{self.width},{self.height}'


@dataclass(frozen=True)
class Displacement:
    dx: int
    dy: int

    def __post_init__(self):
        for name in ('dx', 'dy'):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f'displacement {name} must be an integer, got {value!r}')
            object.__setattr__(self, name, int(value))

    @classmethod
    def parse(cls, text: str) -> 'Displacement':
        """Parse ``"dx,dy"``."""
        parts = [p.strip() for p in str(text).split(',')]
        if len(parts) != 2:
            raise ValueError(f'expected "dx,dy", got {text!r}')
        return cls(int(parts[0]), int(parts[1]))

    @property
    def norm(self) -> float:
        return float(np.hypot(self.dx, self.dy))

    def __add__(self, other: 'Displacement') -> 'Displacement':
        return Displacement(self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: 'Displacement') -> 'Displacement':
        return Displacement(self.dx - other.dx, self.dy - other.dy)

    def __neg__(self) -> 'Displacement':
        return Displacement(-self.dx, -self.dy)

    def __str__(self):
        return f'{self.dx},{self.dy}'


ZERO = Displacement(0, 0)


@dataclass(frozen=True, eq=False)
class FrameStack:
    """Intensity frames of one arm, indexed ``(frame, row, column)``."""
    pixels: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64, copy=True)
        if pixels.ndim == 2:
            pixels = pixels[np.newaxis]
        if pixels.ndim != 3:
            raise ValueError(f'frame stack must be 3-D (frame, row, column), got shape {pixels.shape}')
        if min(pixels.shape) < 1:
            raise ValueError(f'frame stack dimensions must be positive, got shape {pixels.shape}')
        if not np.all(np.isfinite(pixels)):
            raise ValueError('frame stack contains non-finite intensities')
        if np.any(pixels < 0):
            frame, row, column = np.argwhere(pixels < 0)[0]
            raise ValueError(f'negative intensity at frame {frame}, row {row}, column {column}')
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)
        object.__setattr__(self, 'meta', MappingProxyType({str(k): str(v) for k, v in dict(self.meta).items()}))

    @property
    def n_frames(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def frame(self, index: int) -> np.ndarray:
        if not 0 <= index < self.n_frames:
            raise BoundsError(f'frame index {index} outside 0..{self.n_frames - 1}')
        return self.pixels[index]

    def select_frames(self, start: int, stop: int) -> 'FrameStack':
        """Frame-aligned sub-stack holding frames ``start`` to ``stop - 1``."""
        if not 0 <= start < stop <= self.n_frames:
            raise BoundsError(f'frame range {start}:{stop} outside 0..{self.n_frames}')
        return FrameStack(self.pixels[start:stop], self.meta)

    def with_meta(self, **items) -> 'FrameStack':
        meta = dict(self.meta)
        meta.update({k: str(v) for k, v in items.items()})
        return FrameStack(self.pixels, meta)

    def __eq__(self, other):
        if not isinstance(other, FrameStack):
            return NotImplemented
        return dict(self.meta) == dict(other.meta) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f'FrameStack({self.width}x{self.height}x{self.n_frames}, meta={dict(self.meta)!r})'


def crop(stack: FrameStack, region: Region) -> FrameStack:
    """Project ``stack`` onto ``region`` for every frame."""
    region.require_inside(stack.width, stack.height)
    rows, cols = region.slices
    return FrameStack(stack.pixels[:, rows, cols], stack.meta)


def shift_region(region: Region, d: Displacement, bounds: tuple[int, int] | None = None) -> Region:
    """Translate ``region`` by ``d``; ``bounds`` is the sensor ``(width, height)``."""
    x0, y0 = region.x0 + d.dx, region.y0 + d.dy
    if x0 < 0 or y0 < 0:
        raise BoundsError(f'region {region} shifted by ({d.dx}, {d.dy}) has a negative origin')
    shifted = Region(x0, y0, region.width, region.height)
    if bounds is not None:
        shifted.require_inside(bounds[0], bounds[1], what=f'region {region} shifted by ({d.dx}, {d.dy})')
    return shifted


def _encode_meta(meta: Mapping[str, str]) -> bytes:
    lines = []
    for key in sorted(meta):
        value = meta[key]
        if not key or '=' in key or '\n' in key or '\n' in value:
            raise GisFormatError(f'meta entry {key!r}={value!r} cannot be stored as a key=value line')
        lines.append(f'{key}={value}\n')
    return ''.join(lines).encode('utf-8')


def _decode_meta(block: bytes) -> dict[str, str]:
    try:
        text = block.decode('utf-8')
    except UnicodeDecodeError as exc:
        raise GisFormatError(f'meta block is not UTF-8: {exc}') from exc
    meta = {}
    # only \n separates entries; values may hold any other control character
    for line in text.split('\n'):
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key:
            raise GisFormatError(f'meta line {line!r} is not key=value')
        meta[key] = value
    return meta


def encode_stack(stack: FrameStack) -> bytes:
    """Serialize ``stack`` to GIS1 bytes."""
    pixels = stack.pixels
    bad = (pixels > U16_MAX) | (pixels != np.round(pixels))
    if np.any(bad):
        frame, row, column = (int(i) for i in np.argwhere(bad)[0])
        raise QuantizationRangeError(frame, row, column, float(pixels[frame, row, column]))
    meta = _encode_meta(stack.meta)
    header = GIS_HEADER.pack(
        GIS_MAGIC, GIS_VERSION, GIS_DTYPE_U16, 0,
        stack.width, stack.height, stack.n_frames, len(meta),
    )
    payload = pixels.astype('<u2').tobytes(order='C')
    return header + meta + payload


def decode_stack(buffer: bytes) -> FrameStack:
    """Parse GIS1 bytes into a ``FrameStack``."""
    if len(buffer) < GIS_HEADER.size:
        raise GisFormatError(f'GIS1 header needs {GIS_HEADER.size} bytes, got {len(buffer)}')
    magic, version, dtype, reserved, width, height, n_frames, meta_len = GIS_HEADER.unpack_from(buffer)
    if magic != GIS_MAGIC:
        raise GisFormatError(f'bad magic {magic!r}, expected {GIS_MAGIC!r}')
    if version != GIS_VERSION:
        raise GisFormatError(f'unsupported GIS1 version {version}')
    if dtype != GIS_DTYPE_U16:
        raise GisFormatError(f'unsupported GIS1 dtype {dtype}')
    if reserved != 0:
        raise GisFormatError(f'reserved header bytes must be zero, got {reserved}')
    if min(width, height, n_frames) < 1:
        raise GisFormatError(f'empty GIS1 dimensions {width}x{height}x{n_frames}')
    offset = GIS_HEADER.size
    if len(buffer) < offset + meta_len:
        raise TruncationError(offset + meta_len, len(buffer))
    meta = _decode_meta(buffer[offset:offset + meta_len])
    offset += meta_len
    expected = offset + 2 * width * height * n_frames
    if len(buffer) < expected:
        raise TruncationError(expected, len(buffer))
    if len(buffer) > expected:
        raise GisFormatError(f'{len(buffer) - expected} trailing bytes after the GIS1 payload')
    payload = np.frombuffer(buffer, dtype='<u2', offset=offset, count=width * height * n_frames)
    return FrameStack(payload.reshape(n_frames, height, width).astype(np.float64), meta)


def read_stack(path) -> FrameStack:
    with open(path, 'rb') as handle:
        buffer = handle.read()
    stack = decode_stack(buffer)
    logger.debug('read %s: %dx%dx%d', path, stack.width, stack.height, stack.n_frames)
    return stack


def write_stack(stack: FrameStack, path):
    atomic_write(path, encode_stack(stack))
    logger.info('wrote stack %s: %dx%dx%d', path, stack.width, stack.height, stack.n_frames)
