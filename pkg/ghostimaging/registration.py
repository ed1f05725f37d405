"""
Registration of correlated regions between arms.

For every integer displacement ``D`` of a search window, the moving region is
moved by ``D`` and compared with the reference region frame by frame: the
per-frame ``c2`` uses spatial averages over the region pixels. The map value
is the mean of the per-frame coefficients. The argmax of the map is the
registration; the width of its peak estimates the speckle size.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimators import CorrelationValue, is_zero_moment
from .exceptions import AlignmentError, BoundsError, RegistrationError, UsageError
from .frames import Displacement, FrameStack, Region, shift_region

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchWindow:
    """Inclusive displacement bounds of an exhaustive search."""
    dx_min: int
    dx_max: int
    dy_min: int
    dy_max: int

    def __post_init__(self):
        if self.dx_min > self.dx_max or self.dy_min > self.dy_max:
            raise UsageError(f'empty search window {self}')

    @classmethod
    def square(cls, radius: int) -> 'SearchWindow':
        return cls(-radius, radius, -radius, radius)

    @classmethod
    def parse(cls, text: str) -> 'SearchWindow':
        """Parse ``"radius"`` or ``"dx_min,dx_max,dy_min,dy_max"``."""
        parts = [p.strip() for p in str(text).split(',')]
        if len(parts) == 1:
            return cls.square(int(parts[0]))
        if len(parts) != 4:
            raise ValueError(f'expected "dx_min,dx_max,dy_min,dy_max", got {text!r}')
        return cls(*(int(p) for p in parts))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dy_max - self.dy_min + 1, self.dx_max - self.dx_min + 1)

    def displacements(self):
        for dy in range(self.dy_min, self.dy_max + 1):
            for dx in range(self.dx_min, self.dx_max + 1):
                yield Displacement(dx, dy)

    def __str__(self):
        return f'{self.dx_min},{self.dx_max},{self.dy_min},{self.dy_max}'


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    """Mean per-frame spatial ``c2`` for each displacement, indexed ``[dy, dx]``."""
    window: SearchWindow
    values: np.ndarray
    frames_used: np.ndarray
    n_frames: int

    def value(self, d: Displacement) -> float:
        return float(self.values[d.dy - self.window.dy_min, d.dx - self.window.dx_min])

    def displacement_at(self, row: int, column: int) -> Displacement:
        return Displacement(column + self.window.dx_min, row + self.window.dy_min)

    def to_csv(self) -> str:
        lines = ['dx,dy,value']
        for d in self.window.displacements():
            v = self.value(d)
            lines.append(f'{d.dx},{d.dy},{"" if np.isnan(v) else repr(v)}')
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True)
class RegistrationResult:
    d_max: Displacement
    peak_value: float
    fwhm_x: float
    fwhm_y: float
    distance: float
    translation: Displacement
    on_boundary: bool = False

    def map_region(self, region: Region, bounds: tuple[int, int] | None = None) -> Region:
        """The region of the moving arm that corresponds to ``region`` of the reference arm."""
        return shift_region(region, self.translation, bounds)

    def to_text(self, prefix: str = '') -> str:
        lines = [
            f'{prefix}d_max={self.d_max}',
            f'{prefix}translation={self.translation}',
            f'{prefix}peak_value={self.peak_value!r}',
            f'{prefix}fwhm_x={self.fwhm_x!r}',
            f'{prefix}fwhm_y={self.fwhm_y!r}',
            f'{prefix}distance={self.distance!r}',
            f'{prefix}on_boundary={str(self.on_boundary).lower()}',
        ]
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_values(cls, values: dict, prefix: str = '') -> 'RegistrationResult':
        try:
            return cls(
                d_max=Displacement.parse(values[f'{prefix}d_max']),
                peak_value=float(values[f'{prefix}peak_value']),
                fwhm_x=float(values[f'{prefix}fwhm_x']),
                fwhm_y=float(values[f'{prefix}fwhm_y']),
                distance=float(values[f'{prefix}distance']),
                translation=Displacement.parse(values[f'{prefix}translation']),
                on_boundary=values.get(f'{prefix}on_boundary', 'false') == 'true',
            )
        except KeyError as exc:
            raise RegistrationError(f'registration report lacks {exc.args[0]}') from exc
        except ValueError as exc:
            raise RegistrationError(f'malformed registration report: {exc}') from exc


@dataclass(frozen=True)
class RegistrationChain:
    arm12: RegistrationResult
    arm23: RegistrationResult

    @property
    def arm3_translation(self) -> Displacement:
        """Translation from arm-1 coordinates to arm-3 coordinates."""
        return self.arm12.translation + self.arm23.translation

    def to_text(self) -> str:
        return (self.arm12.to_text('arm12_') + self.arm23.to_text('arm23_')
                + f'arm13_translation={self.arm3_translation}\n')

    @classmethod
    def from_text(cls, text: str) -> 'RegistrationChain':
        values = {}
        for line in text.splitlines():
            key, sep, value = line.partition('=')
            if sep:
                values[key.strip()] = value.strip()
        return cls(RegistrationResult.from_values(values, 'arm12_'),
                   RegistrationResult.from_values(values, 'arm23_'))


def spatial_c2_frames(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-frame ``c2`` with spatial averages over the last two axes; NaN if undefined."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise AlignmentError(f'region views differ in shape: {a.shape} vs {b.shape}')
    if a.shape[-1] * a.shape[-2] < 2:
        raise UsageError('spatial c2 needs at least two pixels')
    da = a - a.mean(axis=(-2, -1), keepdims=True)
    db = b - b.mean(axis=(-2, -1), keepdims=True)
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    scale_a = np.sqrt((a * a).mean(axis=(-2, -1)))
    scale_b = np.sqrt((b * b).mean(axis=(-2, -1)))
    undefined = is_zero_moment(var_a, scale_a, 2) | is_zero_moment(var_b, scale_b, 2)
    with np.errstate(divide='ignore', invalid='ignore'):
        values = cov / (np.sqrt(var_a) * np.sqrt(var_b))
    return np.where(undefined, np.nan, values)


def frame_spatial_c2(frame_a, frame_b) -> CorrelationValue:
    """``c2`` of two single-frame region views with spatial averages."""
    a = np.asarray(frame_a, dtype=np.float64)
    if a.ndim != 2:
        raise UsageError(f'expected a 2-D region view, got shape {a.shape}')
    value = spatial_c2_frames(a, frame_b)
    return CorrelationValue.from_float(value, a.size)


def correlation_map(stack_ref: FrameStack, region_ref: Region, stack_moving: FrameStack,
                    region_moving_origin: Region, search: SearchWindow, threads: int = 1) -> CorrelationMap:
    if stack_ref.n_frames != stack_moving.n_frames:
        raise AlignmentError(f'reference has {stack_ref.n_frames} frames, the moving stack has {stack_moving.n_frames}')
    if (region_ref.width, region_ref.height) != (region_moving_origin.width, region_moving_origin.height):
        raise AlignmentError(f'reference region {region_ref} and moving region {region_moving_origin} differ in size')
    region_ref.require_inside(stack_ref.width, stack_ref.height, what='reference region')
    bounds = (stack_moving.width, stack_moving.height)
    for d in search.displacements():
        try:
            shift_region(region_moving_origin, d, bounds)
        except BoundsError as exc:
            raise BoundsError(f'displacement ({d.dx}, {d.dy}) of the search window {search} '
                              f'leaves the moving sensor: {exc}') from exc

    rows, cols = region_ref.slices
    reference = stack_ref.pixels[:, rows, cols]
    values = np.full(search.shape, np.nan)
    frames_used = np.zeros(search.shape, dtype=np.int64)

    def evaluate_row(dy):
        row = dy - search.dy_min
        for dx in range(search.dx_min, search.dx_max + 1):
            moving_rows, moving_cols = shift_region(region_moving_origin, Displacement(dx, dy)).slices
            per_frame = spatial_c2_frames(reference, stack_moving.pixels[:, moving_rows, moving_cols])
            defined = ~np.isnan(per_frame)
            column = dx - search.dx_min
            frames_used[row, column] = int(defined.sum())
            if defined.any():
                values[row, column] = per_frame[defined].mean()

    dys = range(search.dy_min, search.dy_max + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(evaluate_row, dys))
    else:
        for dy in dys:
            evaluate_row(dy)

    skipped = int((stack_ref.n_frames - frames_used).sum())
    if skipped:
        logger.warning('skipped %d undefined frame evaluations (zero spatial variance)', skipped)
    values.setflags(write=False)
    return CorrelationMap(search, values, frames_used, stack_ref.n_frames)


def _argmax(cmap: CorrelationMap) -> tuple[int, int]:
    values = cmap.values
    peak = np.nanmax(values)
    candidates = np.argwhere(values == peak)

    def order(index):
        d = cmap.displacement_at(*index)
        return (d.dx * d.dx + d.dy * d.dy, d.dy, d.dx)

    row, column = min(candidates, key=order)
    return int(row), int(column)


def _half_width_crossing(profile: np.ndarray, peak: int, level: float, step: int) -> float:
    """Position of the half-level crossing walking from ``peak`` in direction ``step``."""
    i = peak
    while 0 <= i + step < profile.size:
        nxt = profile[i + step]
        if np.isnan(nxt) or nxt < level:
            if np.isnan(nxt):
                return float(i)
            frac = (profile[i] - level) / (profile[i] - nxt)
            return i + step * frac
        i += step
    logger.warning('half-maximum crossing not found inside the map; FWHM is a lower bound')
    return float(i)


def profile_fwhm(profile: np.ndarray, peak: int, level: float) -> float:
    """FWHM of a 1-D profile by linear interpolation of the two ``level`` crossings."""
    left = _half_width_crossing(profile, peak, level, -1)
    right = _half_width_crossing(profile, peak, level, +1)
    return right - left


def half_level(cmap: CorrelationMap, peak: float) -> float:
    """Half-maximum level measured above the map's median background.

    The median is taken as the floor, so the level is ``median + (peak - median) / 2``.
    """
    background = float(np.nanmedian(cmap.values))
    return background + 0.5 * (peak - background)


def register(cmap: CorrelationMap, ref_anchor: Region, moving_origin: Region) -> RegistrationResult:
    """Locate the correlation peak and size it.

    Ties go to the smallest ``|D|``, then the smallest ``dy``, then ``dx``.
    The FWHM on each axis interpolates the ``half_level`` crossings of the
    profile through the peak.
    """
    if np.all(np.isnan(cmap.values)):
        raise RegistrationError('correlation map holds no defined value')
    row, column = _argmax(cmap)
    d_max = cmap.displacement_at(row, column)
    peak = float(cmap.values[row, column])

    if peak > 0:
        level = half_level(cmap, peak)
        fwhm_x = profile_fwhm(cmap.values[row, :], column, level)
        fwhm_y = profile_fwhm(cmap.values[:, column], row, level)
    else:
        fwhm_x = fwhm_y = float('nan')

    window = cmap.window
    on_boundary = (
        (window.dx_min < window.dx_max and d_max.dx in (window.dx_min, window.dx_max))
        or (window.dy_min < window.dy_max and d_max.dy in (window.dy_min, window.dy_max))
    )
    if on_boundary:
        logger.warning('correlation peak at (%d, %d) lies on the search window boundary %s',
                       d_max.dx, d_max.dy, window)

    moving = shift_region(moving_origin, d_max)
    (ax, ay), (px, py) = ref_anchor.center, moving.center
    translation = Displacement(moving.x0 - ref_anchor.x0, moving.y0 - ref_anchor.y0)
    result = RegistrationResult(
        d_max=d_max,
        peak_value=peak,
        fwhm_x=float(fwhm_x),
        fwhm_y=float(fwhm_y),
        distance=float(np.hypot(px - ax, py - ay)),
        translation=translation,
        on_boundary=bool(on_boundary),
    )
    logger.info('registered d_max=(%d, %d) peak=%.4f fwhm=(%.2f, %.2f)',
                d_max.dx, d_max.dy, peak, result.fwhm_x, result.fwhm_y)
    return result


def register_pair(stack_ref: FrameStack, anchor: Region, stack_moving: FrameStack, moving_origin: Region,
                  search: SearchWindow, threads: int = 1) -> tuple[RegistrationResult, CorrelationMap]:
    cmap = correlation_map(stack_ref, anchor, stack_moving, moving_origin, search, threads=threads)
    return register(cmap, anchor, moving_origin), cmap


def chain_register(arm1: FrameStack, arm2: FrameStack, arm3: FrameStack, anchor: Region,
                   moving2_origin: Region, search: SearchWindow, moving3_origin: Region | None = None,
                   threads: int = 1, maps: list | None = None) -> RegistrationChain:
    """Register arm 2 on arm 1 using the object-free ``anchor``, then arm 3 on arm 2.

    The arm-2 reference for the second step is the registered anchor region
    ``C2``; ``moving3_origin`` defaults to ``C2``. Correlation maps are
    appended to ``maps`` when a list is given.
    """
    result12, map12 = register_pair(arm1, anchor, arm2, moving2_origin, search, threads)
    anchor2 = result12.map_region(anchor, (arm2.width, arm2.height))
    result23, map23 = register_pair(arm2, anchor2, arm3, moving3_origin or anchor2, search, threads)
    if maps is not None:
        maps.extend([map12, map23])
    return RegistrationChain(result12, result23)
