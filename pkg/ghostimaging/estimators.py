"""
Moment accumulation and the normalized correlation coefficients.

``c2`` is the covariance of two intensity series normalized by the square
roots of their second central moments; ``c3`` is the joint third central
moment of three series normalized by the cube roots of their third central
moments. Averages are population (divide-by-n) averages over the samples.

A ``MomentSummary`` accumulates raw power and cross sums in one pass. Sums
may be scalars or arrays, so a single summary can hold one accumulator per
pixel of a ghost image. Summaries merge: frame ranges can be summarized in
parallel and combined in a fixed order.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exceptions import UsageError

logger = logging.getLogger(__name__)

# A central moment of order k is zero when |mu_k| <= ZERO_TOLERANCE * scale**k,
# scale being the root-mean-square of the series.
ZERO_TOLERANCE = 1e-9

_POWER_KEYS = ('s1', 's2', 's3')


@dataclass(frozen=True)
class CorrelationValue:
    """A correlation coefficient; ``value`` is ``None`` when undefined."""
    value: float | None
    n: int

    @property
    def defined(self) -> bool:
        return self.value is not None

    def __float__(self):
        return float('nan') if self.value is None else float(self.value)

    @classmethod
    def from_float(cls, value, n: int) -> 'CorrelationValue':
        value = float(value)
        return cls(None if np.isnan(value) else value, int(n))


def signed_cbrt(values):
    """Real cube root that keeps the sign of negative values."""
    return np.cbrt(values)


class MomentSummary:
    """One-pass accumulator of the sums needed by ``c2`` and ``c3``.

    ``arity`` is the number of series (1 to 3). Each series ``i`` is shifted
    by a fixed ``origin[i]`` before accumulation; central moments do not
    depend on the shift, which only keeps raw sums small. Additions use
    Kahan compensation.
    """

    def __init__(self, arity: int, origin=None, shape=()):
        if arity not in (1, 2, 3):
            raise UsageError(f'a moment summary tracks 1 to 3 series, got {arity}')
        self.arity = arity
        if origin is None:
            origin = (0.0,) * arity
        if len(origin) != arity:
            raise UsageError(f'expected {arity} origins, got {len(origin)}')
        self.origin = tuple(np.asarray(o, dtype=np.float64) for o in origin)
        self.shape = tuple(shape)
        self.n = 0
        self._sums: dict[str, np.ndarray] = {}
        self._comp: dict[str, np.ndarray] = {}
        for key in self._keys():
            self._sums[key] = np.zeros(self.shape)
            self._comp[key] = np.zeros(self.shape)

    def _keys(self):
        for i in range(self.arity):
            for power in _POWER_KEYS:
                yield f'{power}_{i}'
        for i, j in combinations(range(self.arity), 2):
            yield f'x_{i}{j}'
        if self.arity == 3:
            yield 'x_012'

    def copy(self) -> 'MomentSummary':
        other = MomentSummary(self.arity, self.origin, self.shape)
        other.n = self.n
        other._sums = {k: v.copy() for k, v in self._sums.items()}
        other._comp = {k: v.copy() for k, v in self._comp.items()}
        return other

    def _kahan_add(self, key, value):
        y = value - self._comp[key]
        t = self._sums[key] + y
        self._comp[key] = (t - self._sums[key]) - y
        self._sums[key] = t

    def _total(self, key):
        return self._sums[key] - self._comp[key]

    def _centered(self, series):
        if len(series) != self.arity:
            raise UsageError(f'expected {self.arity} series values, got {len(series)}')
        return [np.asarray(s, dtype=np.float64) - o for s, o in zip(series, self.origin)]

    def add(self, *sample) -> 'MomentSummary':
        """Add one sample (one value per series) in place."""
        values = self._centered(sample)
        for i, u in enumerate(values):
            self._kahan_add(f's1_{i}', u)
            self._kahan_add(f's2_{i}', u * u)
            self._kahan_add(f's3_{i}', u * u * u)
        for i, j in combinations(range(self.arity), 2):
            self._kahan_add(f'x_{i}{j}', values[i] * values[j])
        if self.arity == 3:
            self._kahan_add('x_012', values[0] * values[1] * values[2])
        self.n += 1
        return self

    def add_block(self, *series) -> 'MomentSummary':
        """Add many samples at once; axis 0 of every series is the sample axis."""
        values = self._centered(series)
        lengths = {u.shape[0] for u in values}
        if len(lengths) != 1:
            raise UsageError(f'series lengths differ: {sorted(lengths)}')
        for i, u in enumerate(values):
            u2 = u * u
            self._kahan_add(f's1_{i}', u.sum(axis=0))
            self._kahan_add(f's2_{i}', u2.sum(axis=0))
            self._kahan_add(f's3_{i}', (u2 * u).sum(axis=0))
        for i, j in combinations(range(self.arity), 2):
            self._kahan_add(f'x_{i}{j}', (values[i] * values[j]).sum(axis=0))
        if self.arity == 3:
            self._kahan_add('x_012', (values[0] * values[1] * values[2]).sum(axis=0))
        self.n += lengths.pop()
        return self

    def merge(self, other: 'MomentSummary') -> 'MomentSummary':
        """Fold ``other`` into this summary in place."""
        if other.arity != self.arity:
            raise UsageError(f'cannot merge arity {other.arity} into arity {self.arity}')
        if any(not np.array_equal(a, b) for a, b in zip(self.origin, other.origin)):
            raise UsageError('cannot merge summaries with different origins')
        for key in self._sums:
            self._kahan_add(key, other._total(key))
        self.n += other.n
        return self

    # statistics

    def _avg(self, key):
        return self._total(key) / self.n

    def _shifted_mean(self, i):
        return self._avg(f's1_{i}')

    def mean(self, i: int = 0):
        if self.n == 0:
            return np.nan
        return self.origin[i] + self._shifted_mean(i)

    def mu2(self, i: int = 0):
        """Second central moment of series ``i`` (never negative)."""
        if self.n == 0:
            return np.nan
        m = self._shifted_mean(i)
        return np.maximum(self._avg(f's2_{i}') - m * m, 0.0)

    def mu3(self, i: int = 0):
        """Third central moment of series ``i``."""
        if self.n == 0:
            return np.nan
        m = self._shifted_mean(i)
        return self._avg(f's3_{i}') - 3.0 * m * self._avg(f's2_{i}') + 2.0 * m ** 3

    def raw_moment(self, i: int, k: int):
        """``<x^k>`` of the unshifted series for ``k`` in 1..3."""
        if self.n == 0:
            return np.nan
        mean = self.mean(i)
        if k == 1:
            return mean
        if k == 2:
            return self.mu2(i) + mean ** 2
        if k == 3:
            return self.mu3(i) + 3.0 * mean * self.mu2(i) + mean ** 3
        raise UsageError(f'raw moments are tracked up to order 3, got {k}')

    def g2(self, i: int = 0):
        """Zero-delay normalized autocorrelation ``<x^2> / <x>^2``."""
        return self.raw_moment(i, 2) / self.mean(i) ** 2

    def covariance(self, i: int, j: int):
        if self.n == 0:
            return np.nan
        a, b = sorted((i, j))
        if a == b:
            return self.mu2(a)
        return self._avg(f'x_{a}{b}') - self._shifted_mean(a) * self._shifted_mean(b)

    def coskewness(self):
        """Joint third central moment ``<(x-<x>)(y-<y>)(z-<z>)>``."""
        if self.arity != 3:
            raise UsageError('coskewness needs three series')
        if self.n == 0:
            return np.nan
        mx, my, mz = (self._shifted_mean(i) for i in range(3))
        return (self._avg('x_012')
                - mx * self._avg('x_12')
                - my * self._avg('x_02')
                - mz * self._avg('x_01')
                + 2.0 * mx * my * mz)

    def _scale(self, i):
        return np.sqrt(self._avg(f's2_{i}'))

    def __repr__(self):
        return f'MomentSummary(arity={self.arity}, n={self.n}, shape={self.shape})'


def summary_of(*series, origin=None) -> MomentSummary:
    """Summarize complete series in one block; origin defaults to the first sample."""
    arrays = [np.asarray(s, dtype=np.float64) for s in series]
    if origin is None:
        origin = tuple(a[0] if a.shape[0] else 0.0 for a in arrays)
    shape = np.broadcast_shapes(*(a.shape[1:] for a in arrays))
    return MomentSummary(len(arrays), origin, shape).add_block(*arrays)


def summarize(*series, chunk_frames: int = 64, threads: int = 1, origin=None) -> MomentSummary:
    """Summarize series along axis 0 with the deterministic chunk plan.

    Frames are cut into chunks of ``chunk_frames``; chunks may be summarized
    by several threads but are always merged in chunk order, so the result
    does not depend on ``threads``.
    """
    arrays = [np.asarray(s, dtype=np.float64) for s in series]
    if not arrays:
        raise UsageError('summarize needs at least one series')
    n = arrays[0].shape[0]
    if any(a.shape[0] != n for a in arrays):
        raise UsageError('all series must have the same number of samples')
    if origin is None:
        origin = tuple(a[0] if n else np.zeros(a.shape[1:]) for a in arrays)
    shape = np.broadcast_shapes(*(a.shape[1:] for a in arrays))
    chunk_frames = max(1, int(chunk_frames))
    starts = list(range(0, n, chunk_frames))

    def chunk(start):
        stop = min(start + chunk_frames, n)
        return MomentSummary(len(arrays), origin, shape).add_block(*(a[start:stop] for a in arrays))

    total = MomentSummary(len(arrays), origin, shape)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(start) for start in starts]
    for part in parts:
        total.merge(part)
    logger.debug('summarized %d samples in %d chunk(s)', n, len(starts))
    return total


def pooled_summary(*stacks, chunk_frames: int = 64, threads: int = 1) -> MomentSummary:
    """Scalar summary treating every element of ``(frame, ...)`` arrays as one sample.

    Chunks are cut along the frame axis and merged in frame order.
    """
    arrays = [np.asarray(s, dtype=np.float64) for s in stacks]
    if not arrays:
        raise UsageError('pooled_summary needs at least one series')
    if len({a.shape for a in arrays}) != 1:
        raise UsageError('pooled series must share one shape')
    n = arrays[0].shape[0]
    origin = tuple(float(a.flat[0]) if a.size else 0.0 for a in arrays)
    chunk_frames = max(1, int(chunk_frames))
    starts = list(range(0, n, chunk_frames))

    def chunk(start):
        stop = min(start + chunk_frames, n)
        return MomentSummary(len(arrays), origin).add_block(*(a[start:stop].ravel() for a in arrays))

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(start) for start in starts]
    total = MomentSummary(len(arrays), origin)
    for part in parts:
        total.merge(part)
    return total


def accumulate(summary: MomentSummary, sample) -> MomentSummary:
    """Return a new summary with ``sample`` (1 to 3 values) added."""
    if np.ndim(sample) == 0:
        sample = (sample,)
    if len(sample) != summary.arity:
        raise UsageError(f'sample has {len(sample)} values, summary expects {summary.arity}')
    return summary.copy().add(*sample)


def merge(a: MomentSummary, b: MomentSummary) -> MomentSummary:
    return a.copy().merge(b)


def is_zero_moment(moment, scale, order: int):
    """Whether a central moment is indistinguishable from zero at round-off level."""
    return np.abs(moment) <= ZERO_TOLERANCE * np.asarray(scale) ** order


def _zero_variance(summary, i):
    return is_zero_moment(summary.mu2(i), summary._scale(i), 2)


def _zero_third(summary, i):
    return is_zero_moment(summary.mu3(i), summary._scale(i), 3)


def c2_values(summary: MomentSummary):
    """Element-wise ``c2`` of a two-series summary; NaN where undefined."""
    if summary.arity != 2:
        raise UsageError(f'c2 needs a two-series summary, got arity {summary.arity}')
    if summary.n < 2:
        return np.full(summary.shape, np.nan)[()]
    undefined = _zero_variance(summary, 0) | _zero_variance(summary, 1)
    with np.errstate(divide='ignore', invalid='ignore'):
        value = summary.covariance(0, 1) / (np.sqrt(summary.mu2(0)) * np.sqrt(summary.mu2(1)))
    return np.where(undefined, np.nan, value)[()]


def c3_values(summary: MomentSummary):
    """Element-wise ``c3`` of a three-series summary; NaN where undefined."""
    if summary.arity != 3:
        raise UsageError(f'c3 needs a three-series summary, got arity {summary.arity}')
    if summary.n < 3:
        return np.full(summary.shape, np.nan)[()]
    undefined = _zero_third(summary, 0) | _zero_third(summary, 1) | _zero_third(summary, 2)
    denominator = signed_cbrt(summary.mu3(0)) * signed_cbrt(summary.mu3(1)) * signed_cbrt(summary.mu3(2))
    with np.errstate(divide='ignore', invalid='ignore'):
        value = summary.coskewness() / denominator
    return np.where(undefined, np.nan, value)[()]


def _scalar(summary, values) -> CorrelationValue:
    if summary.shape:
        raise UsageError('use c2_values/c3_values for array summaries')
    return CorrelationValue.from_float(values, summary.n)


def c2(summary: MomentSummary) -> CorrelationValue:
    return _scalar(summary, c2_values(summary))


def c3(summary: MomentSummary) -> CorrelationValue:
    return _scalar(summary, c3_values(summary))


def _as_series(*series):
    arrays = [np.asarray(s, dtype=np.float64).ravel() for s in series]
    if len({a.size for a in arrays}) != 1:
        raise UsageError('oracle series must have equal lengths')
    return arrays


def oracle_c2(x, y) -> CorrelationValue:
    """Two-pass ``c2``: means first, then sums over deviations."""
    x, y = _as_series(x, y)
    n = x.size
    if n < 2:
        return CorrelationValue(None, n)
    dx, dy = x - x.mean(), y - y.mean()
    mu2x, mu2y = np.mean(dx * dx), np.mean(dy * dy)
    scale_x, scale_y = np.sqrt(np.mean(x * x)), np.sqrt(np.mean(y * y))
    if is_zero_moment(mu2x, scale_x, 2) or is_zero_moment(mu2y, scale_y, 2):
        return CorrelationValue(None, n)
    return CorrelationValue(float(np.mean(dx * dy) / (np.sqrt(mu2x) * np.sqrt(mu2y))), n)


def oracle_c3(x, y, z) -> CorrelationValue:
    """Two-pass ``c3``: means first, then sums over deviations."""
    x, y, z = _as_series(x, y, z)
    n = x.size
    if n < 3:
        return CorrelationValue(None, n)
    deviations = [a - a.mean() for a in (x, y, z)]
    thirds = [np.mean(d ** 3) for d in deviations]
    for a, mu3 in zip((x, y, z), thirds):
        if is_zero_moment(mu3, np.sqrt(np.mean(a * a)), 3):
            return CorrelationValue(None, n)
    numerator = np.mean(deviations[0] * deviations[1] * deviations[2])
    denominator = signed_cbrt(thirds[0]) * signed_cbrt(thirds[1]) * signed_cbrt(thirds[2])
    return CorrelationValue(float(numerator / denominator), n)
