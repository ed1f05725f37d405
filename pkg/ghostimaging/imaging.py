"""
Ghost-image reconstruction.

The test arm is read as a bucket: one number per frame, the pixel sum over
the test region. A second-order ghost image holds, for each pixel of a
registered reference region, the temporal ``c2`` between the bucket and that
pixel. The third-order image holds the temporal ``c3`` between the bucket
and the same registered pixel of both reference arms.

Visibility compares the mean coefficient over a background region with the
mean over an object region: ``V = (back - obj) / (back + obj)``.
"""
import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from . import estimators
from .estimators import CorrelationValue
from .exceptions import AlignmentError, MetricError, UsageError
from .frames import FrameStack, Region, crop

logger = logging.getLogger(__name__)


def default_chunk_frames() -> int:
    return getattr(settings, 'GHOSTLAB_CHUNK_FRAMES', 64)


@dataclass(frozen=True, eq=False)
class BucketSeries:
    values: np.ndarray
    region: Region

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    def select_frames(self, start: int, stop: int) -> 'BucketSeries':
        return BucketSeries(self.values[start:stop], self.region)


@dataclass(frozen=True, eq=False)
class GhostImage:
    """Per-pixel correlation coefficients over a reference region; NaN is undefined."""
    order: int
    values: np.ndarray
    n_frames: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order not in (2, 3):
            raise UsageError(f'ghost images are of order 2 or 3, got {self.order}')
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise UsageError(f'ghost image values must be 2-D, got shape {values.shape}')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def undefined_pixels(self) -> list[tuple[int, int]]:
        return [(int(x), int(y)) for y, x in np.argwhere(np.isnan(self.values))]

    def value_at(self, x: int, y: int) -> CorrelationValue:
        return CorrelationValue.from_float(self.values[y, x], self.n_frames)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['x', 'y', 'value'])
        for y in range(self.height):
            for x in range(self.width):
                v = self.values[y, x]
                writer.writerow([x, y, '' if np.isnan(v) else repr(float(v))])
        return buffer.getvalue()

    def provenance_text(self) -> str:
        lines = [f'order={self.order}', f'width={self.width}', f'height={self.height}',
                 f'n_frames={self.n_frames}']
        lines += [f'{key}={value}' for key, value in sorted(self.provenance.items())]
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_csv(cls, text: str, order: int, n_frames: int = 0, provenance: dict | None = None) -> 'GhostImage':
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise UsageError('ghost image CSV holds no pixels')
        width = max(int(r['x']) for r in rows) + 1
        height = max(int(r['y']) for r in rows) + 1
        values = np.full((height, width), np.nan)
        for r in rows:
            if r['value'] != '':
                values[int(r['y']), int(r['x'])] = float(r['value'])
        return cls(order, values, n_frames, dict(provenance or {}))


@dataclass(frozen=True)
class VisibilityReport:
    order: int
    v: float
    v_stderr: float
    region_back: Region
    region_obj: Region
    cj_back: float
    cj_obj: float
    n_back: int = 0
    n_obj: int = 0

    def to_text(self) -> str:
        lines = [
            f'order={self.order}',
            f'v={self.v!r}',
            f'v_stderr={self.v_stderr!r}',
            f'cj_back={self.cj_back!r}',
            f'cj_obj={self.cj_obj!r}',
            f'region_back={self.region_back}',
            f'region_obj={self.region_obj}',
            f'n_back={self.n_back}',
            f'n_obj={self.n_obj}',
        ]
        return '\n'.join(lines) + '\n'

    def to_csv(self) -> str:
        return (
            'order,v,v_stderr,cj_back,cj_obj,n_back,n_obj\n'
            f'{self.order},{self.v!r},{self.v_stderr!r},{self.cj_back!r},{self.cj_obj!r},'
            f'{self.n_back},{self.n_obj}\n'
        )


@dataclass(frozen=True)
class GapPoint:
    start: int
    stop: int
    v2: float
    v3: float

    @property
    def gap(self) -> float:
        return self.v3 - self.v2


def bucket(stack: FrameStack, region: Region) -> BucketSeries:
    """Per-frame pixel sum over ``region``."""
    view = crop(stack, region)
    return BucketSeries(view.pixels.sum(axis=(1, 2)), region)


def _check_alignment(bucket_series: BucketSeries, *stacks: FrameStack):
    for stack in stacks:
        if stack.n_frames != bucket_series.n_frames:
            raise AlignmentError(
                f'bucket has {bucket_series.n_frames} frames, reference stack has {stack.n_frames}')


def _tiled(compute, height: int, threads: int) -> np.ndarray:
    """Evaluate ``compute(row_slice)`` over row tiles and stack the results."""
    tile = max(1, math.ceil(height / max(1, threads)))
    slices = [slice(start, min(start + tile, height)) for start in range(0, height, tile)]
    if threads > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(compute, slices))
    else:
        parts = [compute(s) for s in slices]
    return np.concatenate(parts, axis=0)


def ghost2(bucket_series: BucketSeries, ref_stack: FrameStack, ref_region: Region, threads: int = 1,
           provenance: dict | None = None) -> GhostImage:
    """Second-order ghost image: ``c2(bucket, pixel)`` for every pixel of ``ref_region``."""
    _check_alignment(bucket_series, ref_stack)
    pixels = crop(ref_stack, ref_region).pixels
    b = bucket_series.values[:, np.newaxis, np.newaxis]
    chunk = default_chunk_frames()

    def compute(rows):
        summary = estimators.summarize(b, pixels[:, rows, :], chunk_frames=chunk)
        return np.atleast_2d(estimators.c2_values(summary))

    values = _tiled(compute, ref_region.height, threads)
    info = {'reference_region': str(ref_region), 'bucket_region': str(bucket_series.region)}
    info.update(provenance or {})
    logger.info('reconstructed %dx%d second-order ghost image from %d frames',
                ref_region.width, ref_region.height, bucket_series.n_frames)
    return GhostImage(2, values, bucket_series.n_frames, info)


def ghost3(bucket_series: BucketSeries, ref2_stack: FrameStack, ref2_region: Region,
           ref3_stack: FrameStack, ref3_region: Region, threads: int = 1,
           provenance: dict | None = None) -> GhostImage:
    """Third-order ghost image on the diagonal: ``c3(bucket, arm-2 pixel, arm-3 pixel)``."""
    _check_alignment(bucket_series, ref2_stack, ref3_stack)
    if (ref2_region.width, ref2_region.height) != (ref3_region.width, ref3_region.height):
        raise AlignmentError(f'reference regions {ref2_region} and {ref3_region} differ in size')
    pixels2 = crop(ref2_stack, ref2_region).pixels
    pixels3 = crop(ref3_stack, ref3_region).pixels
    b = bucket_series.values[:, np.newaxis, np.newaxis]
    chunk = default_chunk_frames()

    def compute(rows):
        summary = estimators.summarize(b, pixels2[:, rows, :], pixels3[:, rows, :], chunk_frames=chunk)
        return np.atleast_2d(estimators.c3_values(summary))

    values = _tiled(compute, ref2_region.height, threads)
    info = {
        'reference2_region': str(ref2_region),
        'reference3_region': str(ref3_region),
        'bucket_region': str(bucket_series.region),
    }
    info.update(provenance or {})
    logger.info('reconstructed %dx%d third-order ghost image from %d frames',
                ref2_region.width, ref2_region.height, bucket_series.n_frames)
    return GhostImage(3, values, bucket_series.n_frames, info)


def reference_c2(ref2_stack: FrameStack, ref2_region: Region, ref3_stack: FrameStack,
                 ref3_region: Region) -> GhostImage:
    """Temporal ``c2`` between matching pixels of the two reference arms."""
    if ref2_stack.n_frames != ref3_stack.n_frames:
        raise AlignmentError(f'reference arms have {ref2_stack.n_frames} and {ref3_stack.n_frames} frames')
    if (ref2_region.width, ref2_region.height) != (ref3_region.width, ref3_region.height):
        raise AlignmentError(f'reference regions {ref2_region} and {ref3_region} differ in size')
    summary = estimators.summarize(crop(ref2_stack, ref2_region).pixels, crop(ref3_stack, ref3_region).pixels,
                                   chunk_frames=default_chunk_frames())
    return GhostImage(2, np.atleast_2d(estimators.c2_values(summary)), ref2_stack.n_frames,
                      {'reference2_region': str(ref2_region), 'reference3_region': str(ref3_region)})


def _region_stats(image: GhostImage, region: Region, name: str) -> tuple[float, float, int]:
    if not region.fits(image.width, image.height):
        raise MetricError(f'{region} lies outside the {image.width}x{image.height} image', region=name)
    rows, cols = region.slices
    values = image.values[rows, cols]
    values = values[~np.isnan(values)]
    if values.size == 0:
        raise MetricError(f'{region} contains no defined pixel', region=name)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, stderr, int(values.size)


def visibility(image: GhostImage, region_back: Region, region_obj: Region) -> VisibilityReport:
    """Visibility of ``image`` with first-order propagated standard error."""
    back, se_back, n_back = _region_stats(image, region_back, 'back')
    obj, se_obj, n_obj = _region_stats(image, region_obj, 'obj')
    total = back + obj
    if total == 0:
        raise MetricError('background and object means sum to zero; visibility is undefined')
    v = (back - obj) / total
    dv_dback = 2.0 * obj / total ** 2
    dv_dobj = -2.0 * back / total ** 2
    v_stderr = math.sqrt((dv_dback * se_back) ** 2 + (dv_dobj * se_obj) ** 2)
    return VisibilityReport(image.order, v, v_stderr, region_back, region_obj, back, obj, n_back, n_obj)


def frame_windows(n_frames: int, size: int, count: int | None = None) -> list[tuple[int, int]]:
    """Disjoint consecutive ``(start, stop)`` frame windows of ``size`` frames."""
    if size < 3:
        raise UsageError(f'frame windows need at least 3 frames, got {size}')
    windows = [(start, start + size) for start in range(0, n_frames - size + 1, size)]
    if count is not None:
        if count > len(windows):
            raise UsageError(f'{n_frames} frames hold only {len(windows)} windows of {size}')
        windows = windows[:count]
    return windows


def gap_study(arms: tuple[FrameStack, FrameStack, FrameStack], test_region: Region,
              ref2_region: Region, ref3_region: Region, windows: list[tuple[int, int]],
              region_back: Region, region_obj: Region, reference_arm: int = 2,
              threads: int = 1) -> list[GapPoint]:
    """Second- and third-order visibility on each frame window."""
    if reference_arm not in (2, 3):
        raise UsageError(f'reference arm must be 2 or 3, got {reference_arm}')
    arm1, arm2, arm3 = arms
    full_bucket = bucket(arm1, test_region)
    points = []
    for start, stop in windows:
        b = full_bucket.select_frames(start, stop)
        s2, s3 = arm2.select_frames(start, stop), arm3.select_frames(start, stop)
        if reference_arm == 2:
            image2 = ghost2(b, s2, ref2_region, threads=threads)
        else:
            image2 = ghost2(b, s3, ref3_region, threads=threads)
        image3 = ghost3(b, s2, ref2_region, s3, ref3_region, threads=threads)
        v2 = visibility(image2, region_back, region_obj).v
        v3 = visibility(image3, region_back, region_obj).v
        points.append(GapPoint(start, stop, v2, v3))
        logger.debug('frames %d:%d V2=%.4f V3=%.4f', start, stop, v2, v3)
    return points
