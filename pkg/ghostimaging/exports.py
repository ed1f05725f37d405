"""
PGM rendering of frames, correlation maps and ghost images.

Images are min-max normalized over their defined pixels. Flat data renders
at mid-gray (``maxval // 2``); undefined pixels render as 0 and are listed in
the sidecar text that records the normalization bounds.
"""
import io
import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .exceptions import UsageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rendering:
    gray: np.ndarray
    maxval: int
    low: float
    high: float
    undefined: list

    @property
    def flat(self) -> bool:
        return self.high == self.low

    def sidecar_text(self, source: str = '') -> str:
        lines = []
        if source:
            lines.append(f'source={source}')
        lines += [
            f'maxval={self.maxval}',
            f'min={self.low!r}',
            f'max={self.high!r}',
            f'flat={str(self.flat).lower()}',
            f'undefined_count={len(self.undefined)}',
        ]
        if self.undefined:
            lines.append('undefined_pixels=' + ';'.join(f'{x},{y}' for x, y in self.undefined))
        return '\n'.join(lines) + '\n'


def normalize(values, maxval: int = 255) -> Rendering:
    """Scale ``values`` onto ``0..maxval``; NaN marks undefined pixels."""
    if maxval not in (255, 65535):
        raise UsageError(f'PGM maxval must be 255 or 65535, got {maxval}')
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise UsageError(f'only 2-D data can be rendered, got shape {values.shape}')
    undefined = np.isnan(values)
    dtype = np.uint8 if maxval == 255 else np.uint16
    gray = np.zeros(values.shape, dtype=dtype)
    if undefined.all():
        low = high = float('nan')
    else:
        low, high = float(np.nanmin(values)), float(np.nanmax(values))
        if high == low:
            gray[~undefined] = maxval // 2
        else:
            scaled = np.rint((values[~undefined] - low) / (high - low) * maxval)
            gray[~undefined] = scaled.astype(dtype)
    missing = [(int(x), int(y)) for y, x in np.argwhere(undefined)]
    return Rendering(gray, maxval, low, high, missing)


def encode_pgm(gray: np.ndarray) -> bytes:
    """Binary P5 bytes of an 8- or 16-bit gray array."""
    gray = np.asarray(gray)
    if gray.dtype == np.uint8:
        image = Image.fromarray(gray)
    elif gray.dtype == np.uint16:
        # mode I is written as big-endian 16-bit P5 with maxval 65535
        image = Image.fromarray(gray.astype(np.int32))
    else:
        raise UsageError(f'PGM data must be uint8 or uint16, got {gray.dtype}')
    buffer = io.BytesIO()
    image.save(buffer, format='PPM')
    return buffer.getvalue()


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Gray values and maxval of a P5 file."""
    with Image.open(io.BytesIO(data)) as image:
        maxval = 255 if image.mode == 'L' else 65535
        return np.asarray(image), maxval


def render(values, maxval: int = 255) -> tuple[bytes, Rendering]:
    rendering = normalize(values, maxval)
    return encode_pgm(rendering.gray), rendering


def mask_pgm(transmission: np.ndarray) -> bytes:
    """Object mask as an 8-bit PGM (255 transparent, 0 opaque)."""
    return encode_pgm(np.rint(np.asarray(transmission) * 255).astype(np.uint8))
