"""
Pseudo-thermal speckle synthesis for the three-arm ghost-imaging layout.

Each frame is an independent circular complex Gaussian field obtained by
low-pass filtering white noise with a Gaussian window in the spatial
frequency domain; the recorded intensity is its squared modulus. The field
amplitude correlation is ``exp(-r^2 / coh_radius^2)``, so the intensity
correlation is ``exp(-2 r^2 / coh_radius^2)`` and has a FWHM of
``coh_radius * sqrt(2 ln 2)``.

Arm 1 is the test arm (it carries the object and feeds the bucket); arms 2
and 3 are reference arms. Every arm sees the same master field, translated
by its offset and mixed with an independent field to model imperfect
correlation, then detector noise and quantization.

Random numbers come from counter-based streams keyed by
``(seed, frame, arm, purpose)``, so output never depends on the order in
which frames are produced or on the number of worker threads.
"""
import functools
import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .exceptions import ConfigError, GeometryError
from .frames import U16_MAX, ZERO, Displacement, FrameStack

logger = logging.getLogger(__name__)

MASTER_STREAM = 0
FWHM_PER_RADIUS = math.sqrt(2.0 * math.log(2.0))


def purpose_key(label: str) -> int:
    """Fixed labeled hash that separates random streams by purpose."""
    return zlib.crc32(label.encode('utf-8'))


def stream_rng(seed: int, frame_index: int, arm: int, purpose: str) -> np.random.Generator:
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(frame_index), int(arm), purpose_key(purpose)))
    return np.random.default_rng(sequence)


@dataclass(frozen=True)
class SpeckleParams:
    grid_width: int
    grid_height: int
    coh_radius: float
    mean_intensity: float
    n_frames: int
    seed: int = 0

    def __post_init__(self):
        if self.grid_width < 1 or self.grid_height < 1:
            raise ConfigError(f'grid {self.grid_width}x{self.grid_height} must be positive', key='grid_width')
        limit = min(self.grid_width, self.grid_height) / 4
        if not 0 < self.coh_radius < limit:
            raise ConfigError(
                f'coh_radius {self.coh_radius} must lie in (0, {limit:g}) for a '
                f'{self.grid_width}x{self.grid_height} grid', key='coh_radius')
        if not self.mean_intensity > 0:
            raise ConfigError(f'mean_intensity must be positive, got {self.mean_intensity}', key='mean_intensity')
        if self.n_frames < 1:
            raise ConfigError(f'n_frames must be at least 1, got {self.n_frames}', key='n_frames')
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f'seed must be an unsigned 64-bit integer, got {self.seed}', key='seed')

    @classmethod
    def from_fwhm(cls, fwhm: float, **kwargs) -> 'SpeckleParams':
        """Build params whose intensity correlation peak has the given FWHM."""
        return cls(coh_radius=fwhm / FWHM_PER_RADIUS, **kwargs)

    @property
    def intensity_fwhm(self) -> float:
        return self.coh_radius * FWHM_PER_RADIUS

    @property
    def shape(self) -> tuple[int, int]:
        return (self.grid_height, self.grid_width)


@dataclass(frozen=True)
class ArmParams:
    gain: float = 1.0
    offset: Displacement = ZERO
    decorrelation: float = 0.0
    read_noise_sigma: float = 0.0
    shot_noise: bool = False

    def __post_init__(self):
        if not self.gain > 0:
            raise ConfigError(f'gain must be positive, got {self.gain}', key='gain')
        if not 0.0 <= self.decorrelation <= 1.0:
            raise ConfigError(f'decorrelation must lie in [0, 1], got {self.decorrelation}', key='decorrelation')
        if self.read_noise_sigma < 0:
            raise ConfigError(f'read noise must be non-negative, got {self.read_noise_sigma}', key='read_noise')


@dataclass(frozen=True, eq=False)
class ObjectMask:
    """Transmission of the object: 0 is opaque, 1 is transparent."""
    transmission: np.ndarray

    def __post_init__(self):
        values = np.array(self.transmission, dtype=np.float64, copy=True)
        if values.ndim != 2 or min(values.shape) < 1:
            raise GeometryError(f'object mask must be a non-empty 2-D array, got shape {values.shape}')
        if np.any(~np.isfinite(values)) or values.min() < 0 or values.max() > 1:
            raise GeometryError('object transmission must lie in [0, 1]')
        values.setflags(write=False)
        object.__setattr__(self, 'transmission', values)

    @classmethod
    def transparent(cls, width: int, height: int) -> 'ObjectMask':
        return cls(np.ones((height, width)))

    @property
    def width(self) -> int:
        return self.transmission.shape[1]

    @property
    def height(self) -> int:
        return self.transmission.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ObjectMask):
            return NotImplemented
        return np.array_equal(self.transmission, other.transmission)


@dataclass(frozen=True)
class SimConfig:
    speckle: SpeckleParams
    arms: tuple[ArmParams, ArmParams, ArmParams]
    object: ObjectMask | None = None
    quantization_gain: float = 1.0

    def __post_init__(self):
        arms = tuple(self.arms)
        if len(arms) != 3:
            raise ConfigError(f'exactly three arms are required, got {len(arms)}', key='arms')
        object.__setattr__(self, 'arms', arms)
        if self.object is None:
            object.__setattr__(self, 'object', ObjectMask.transparent(self.speckle.grid_width, self.speckle.grid_height))
        if (self.object.width, self.object.height) != (self.speckle.grid_width, self.speckle.grid_height):
            raise ConfigError(
                f'object mask is {self.object.width}x{self.object.height} but the arm grid is '
                f'{self.speckle.grid_width}x{self.speckle.grid_height}', key='object')
        if not self.quantization_gain > 0:
            raise ConfigError(f'quantization_gain must be positive, got {self.quantization_gain}',
                              key='quantization_gain')


@dataclass(frozen=True, eq=False)
class GroundTruth:
    config: SimConfig

    @property
    def offsets(self) -> tuple[Displacement, ...]:
        return tuple(arm.offset for arm in self.config.arms)

    @property
    def object_mask(self) -> ObjectMask:
        return self.config.object

    def to_text(self) -> str:
        speckle = self.config.speckle
        lines = [
            f'seed={speckle.seed}',
            f'grid_width={speckle.grid_width}',
            f'grid_height={speckle.grid_height}',
            f'n_frames={speckle.n_frames}',
            f'coh_radius={speckle.coh_radius!r}',
            f'intensity_fwhm={speckle.intensity_fwhm!r}',
            f'mean_intensity={speckle.mean_intensity!r}',
            f'quantization_gain={self.config.quantization_gain!r}',
        ]
        for number, arm in enumerate(self.config.arms, start=1):
            lines += [
                f'arm{number}_gain={arm.gain!r}',
                f'arm{number}_offset={arm.offset}',
                f'arm{number}_decorrelation={arm.decorrelation!r}',
                f'arm{number}_read_noise={arm.read_noise_sigma!r}',
                f'arm{number}_shot_noise={str(arm.shot_noise).lower()}',
            ]
        lines.append(f'object_opaque_pixels={int(np.count_nonzero(self.config.object.transmission < 1))}')
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True)
class SimulationResult:
    stacks: tuple[FrameStack, FrameStack, FrameStack]
    truth: GroundTruth = field(repr=False)


def gaussian_window(params: SpeckleParams) -> np.ndarray:
    """Spatial-frequency window, scaled so the mean intensity is exact."""
    return _window(params.grid_height, params.grid_width, params.coh_radius, params.mean_intensity)


@functools.lru_cache(maxsize=16)
def _window(height: int, width: int, coh_radius: float, mean_intensity: float) -> np.ndarray:
    fy = np.fft.fftfreq(height)[:, np.newaxis]
    fx = np.fft.fftfreq(width)[np.newaxis, :]
    window = np.exp(-0.5 * (math.pi * coh_radius) ** 2 * (fx ** 2 + fy ** 2))
    # E|E|^2 of the filtered unit white noise is mean(|H|^2)
    window = window * math.sqrt(mean_intensity / np.mean(window ** 2))
    window.setflags(write=False)
    return window


def synthesize_speckle_frame(params: SpeckleParams, frame_index: int, stream: int = MASTER_STREAM) -> np.ndarray:
    """Intensity of one speckle frame; ``stream`` separates independent fields of one frame."""
    rng = stream_rng(params.seed, frame_index, stream, 'speckle')
    shape = params.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    field_ = np.fft.ifft2(np.fft.fft2(noise) * gaussian_window(params))
    return field_.real ** 2 + field_.imag ** 2


def decorrelation_for_c2(target: float) -> float:
    """Decorrelation of one arm that gives an expected ``c2 = target`` against a clean arm."""
    if not 0.0 <= target <= 1.0:
        raise ConfigError(f'target c2 must lie in [0, 1], got {target}')
    if target == 0.0:
        return 1.0
    ratio = math.sqrt(1.0 / target ** 2 - 1.0)
    return ratio / (1.0 + ratio)


def expected_interarm_c2(d_a: float, d_b: float) -> float:
    """Expected temporal ``c2`` between two noiseless arms with decorrelations ``d_a`` and ``d_b``."""
    norm_a = math.sqrt((1 - d_a) ** 2 + d_a ** 2)
    norm_b = math.sqrt((1 - d_b) ** 2 + d_b ** 2)
    return (1 - d_a) * (1 - d_b) / (norm_a * norm_b)


def _arm_frame(config: SimConfig, master: np.ndarray, frame_index: int, arm_index: int) -> np.ndarray:
    arm = config.arms[arm_index]
    speckle = config.speckle
    intensity = master
    if arm.offset != ZERO:
        intensity = np.roll(master, shift=(arm.offset.dy, arm.offset.dx), axis=(0, 1))
    if arm.decorrelation > 0:
        independent = synthesize_speckle_frame(speckle, frame_index, stream=arm_index + 1)
        intensity = (1.0 - arm.decorrelation) * intensity + arm.decorrelation * independent
    intensity = arm.gain * intensity
    if arm_index == 0:
        intensity = intensity * config.object.transmission
    if arm.shot_noise:
        intensity = stream_rng(speckle.seed, frame_index, arm_index, 'shot').poisson(intensity).astype(np.float64)
    if arm.read_noise_sigma > 0:
        intensity = intensity + stream_rng(speckle.seed, frame_index, arm_index, 'read').normal(
            0.0, arm.read_noise_sigma, intensity.shape)
    return intensity


def _simulate_frame(config: SimConfig, frame_index: int, quantize: bool):
    master = synthesize_speckle_frame(config.speckle, frame_index)
    frames = []
    for arm_index in range(3):
        analog = _arm_frame(config, master, frame_index, arm_index)
        if quantize:
            counts = analog * config.quantization_gain
            if counts.max() > U16_MAX:
                logger.warning('frame %d arm %d saturates at %d counts', frame_index, arm_index + 1, U16_MAX)
            analog = np.rint(np.clip(counts, 0.0, U16_MAX))
        else:
            analog = np.maximum(analog, 0.0)
        frames.append(analog)
    return frames


def simulate(config: SimConfig, quantize: bool = True, threads: int = 1) -> SimulationResult:
    """Simulate the three arm stacks of ``config``.

    With ``quantize`` false the analog intensities are returned (after noise,
    before conversion to counts); negative read-noise excursions are clipped
    to zero in both cases.
    """
    speckle = config.speckle
    shape = (speckle.n_frames, speckle.grid_height, speckle.grid_width)
    arrays = [np.empty(shape) for _ in range(3)]

    def work(frame_index):
        for arm_index, frame in enumerate(_simulate_frame(config, frame_index, quantize)):
            arrays[arm_index][frame_index] = frame

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(speckle.n_frames)))
    else:
        for frame_index in range(speckle.n_frames):
            work(frame_index)

    stacks = []
    for arm_index, pixels in enumerate(arrays):
        arm = config.arms[arm_index]
        meta = {
            'arm': str(arm_index + 1),
            'seed': str(speckle.seed),
            'gain': repr(arm.gain),
            'offset': str(arm.offset),
            'decorrelation': repr(arm.decorrelation),
            'quantized': str(quantize).lower(),
        }
        stacks.append(FrameStack(pixels, meta))
    logger.info('simulated %d frames of %dx%d speckle (seed %d)',
                speckle.n_frames, speckle.grid_width, speckle.grid_height, speckle.seed)
    return SimulationResult(tuple(stacks), GroundTruth(config))


# object masks

def _polyline_distance(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Distance from every pixel center to the polyline through ``points`` (x, y)."""
    yy, xx = np.mgrid[0:height, 0:width]
    pixels = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    best = np.full(pixels.shape[0], np.inf)
    starts, ends = points[:-1], points[1:]
    for a, b in zip(starts, ends):
        ab = b - a
        length2 = float(ab @ ab)
        if length2 == 0.0:
            t = np.zeros(pixels.shape[0])
        else:
            t = np.clip((pixels - a) @ ab / length2, 0.0, 1.0)
        nearest = a + t[:, np.newaxis] * ab
        np.minimum(best, np.hypot(*(pixels - nearest).T), out=best)
    return best.reshape(height, width)


def _stroke_mask(distance: np.ndarray, thickness: float, soft_edge: float) -> np.ndarray:
    half = thickness / 2.0
    if soft_edge > 0:
        return np.clip((distance - half) / soft_edge + 0.5, 0.0, 1.0)
    return (distance > half).astype(np.float64)


def wire_curl_points(width: int, height: int, loops: int = 3, loop_radius: float = 6.0,
                     lead_length: float = 10.0, center=None, samples_per_loop: int = 96) -> np.ndarray:
    """Centerline of a curled wire: a straight lead, ``loops`` coils, a straight lead."""
    cx, cy = center if center is not None else ((width - 1) / 2.0, (height - 1) / 2.0)
    pitch = 1.2 * loop_radius
    coil_span = pitch * loops + 2.0 * loop_radius
    x_start = cx - coil_span / 2.0
    t = np.linspace(0.0, 2.0 * math.pi * loops, samples_per_loop * loops + 1)
    coil_x = x_start + loop_radius + pitch * t / (2.0 * math.pi) - loop_radius * np.cos(t)
    coil_y = cy - loop_radius * np.sin(t)
    coil = np.stack([coil_x, coil_y], axis=1)
    lead_in = np.array([[x_start - lead_length, cy]])
    lead_out = np.array([[coil_x[-1] + lead_length, cy]])
    return np.concatenate([lead_in, coil, lead_out])


def _require_inside(xmin, xmax, ymin, ymax, width, height, kind):
    if xmin < 0 or ymin < 0 or xmax > width - 1 or ymax > height - 1:
        raise GeometryError(
            f'{kind} spans x {xmin:.1f}..{xmax:.1f}, y {ymin:.1f}..{ymax:.1f}, '
            f'outside the {width}x{height} mask')


def builtin_mask(kind: str, width: int, height: int, **geometry) -> ObjectMask:
    """Build an object mask.

    kinds:
        wire_curl: thickness, loops, loop_radius, lead_length, center, soft_edge
        double_slit: slit_width, slit_separation (center to center)
        disk: radius, center
        custom: path to a P5 PGM file
    """
    if width < 1 or height < 1:
        raise GeometryError(f'mask dimensions {width}x{height} must be positive')

    if kind == 'wire_curl':
        thickness = float(geometry.get('thickness', 3.0))
        soft_edge = float(geometry.get('soft_edge', 0.0))
        points = wire_curl_points(
            width, height,
            loops=int(geometry.get('loops', 3)),
            loop_radius=float(geometry.get('loop_radius', 6.0)),
            lead_length=float(geometry.get('lead_length', 10.0)),
            center=geometry.get('center'),
        )
        half = thickness / 2.0
        _require_inside(points[:, 0].min() - half, points[:, 0].max() + half,
                        points[:, 1].min() - half, points[:, 1].max() + half, width, height, 'wire curl')
        return ObjectMask(_stroke_mask(_polyline_distance(points, width, height), thickness, soft_edge))

    if kind == 'double_slit':
        slit_width = int(geometry.get('slit_width', 2))
        separation = int(geometry.get('slit_separation', 6))
        if slit_width < 1 or separation < slit_width:
            raise GeometryError(f'slits of width {slit_width} need a separation of at least {slit_width}')
        total = separation + slit_width
        if total > width:
            raise GeometryError(f'double slit spans {total} columns, mask has {width}')
        first = (width - total) // 2
        transmission = np.zeros((height, width))
        transmission[:, first:first + slit_width] = 1.0
        transmission[:, first + separation:first + separation + slit_width] = 1.0
        return ObjectMask(transmission)

    if kind == 'disk':
        radius = float(geometry.get('radius', 0.0))
        cx, cy = geometry.get('center') or ((width - 1) / 2.0, (height - 1) / 2.0)
        if radius < 0:
            raise GeometryError(f'disk radius must be non-negative, got {radius}')
        if radius == 0:
            return ObjectMask.transparent(width, height)
        _require_inside(cx - radius, cx + radius, cy - radius, cy + radius, width, height, 'disk')
        yy, xx = np.mgrid[0:height, 0:width]
        return ObjectMask(np.where(np.hypot(xx - cx, yy - cy) <= radius, 0.0, 1.0))

    if kind == 'custom':
        path = geometry.get('path')
        if not path:
            raise GeometryError('custom masks need a PGM path')
        with Image.open(path) as image:
            maxval = 255.0 if image.mode in ('L', '1') else 65535.0
            values = np.asarray(image, dtype=np.float64)
        if values.shape != (height, width):
            raise GeometryError(f'mask file {path} is {values.shape[1]}x{values.shape[0]}, expected {width}x{height}')
        return ObjectMask(values / maxval)

    raise GeometryError(f'unknown mask kind {kind!r}')
