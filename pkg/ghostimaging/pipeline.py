"""
Pipeline configuration files.

A configuration is a UTF-8 text file of ``key = value`` lines. A ``#`` at the
start of a line or after whitespace opens a comment, so a value such as
``masks/#2.pgm`` is read whole. Blank lines are ignored. Values are validated by
``PipelineConfigForm`` and every error names the offending line.
"""
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .exceptions import ConfigError
from .forms import PipelineConfigForm
from .frames import ZERO, Region
from .registration import SearchWindow
from .specklesim import ArmParams, ObjectMask, SimConfig, SpeckleParams, builtin_mask

logger = logging.getLogger(__name__)

# '#' opens a comment at the start of a line or after whitespace
COMMENT = re.compile(r'(?:^|\s)#')

DEFAULT_SEARCH_RADIUS = 8
DEFAULT_HISTOGRAM_BINS = 64
DEFAULT_STUDY_WINDOW = 400
DEFAULT_OUTPUT_DIR = 'out'

_OBJECT_GEOMETRY = {
    'wire_curl': ('thickness', 'loops', 'loop_radius', 'lead_length', 'soft_edge'),
    'double_slit': ('slit_width', 'slit_separation'),
    'disk': ('radius',),
}


def parse_lines(text: str) -> tuple[dict[str, str], dict[str, int]]:
    """Split configuration text into raw values and the line of each key."""
    values, lines = {}, {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = COMMENT.split(line, 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f'expected "key = value", got {line.strip()!r}', line=number)
        if key in values:
            raise ConfigError(f'duplicate key (first set on line {lines[key]})', key=key, line=number)
        values[key] = value.strip()
        lines[key] = number
    return values, lines


def _first_error(form: PipelineConfigForm, raw: Mapping[str, str], lines: Mapping[str, int]) -> ConfigError:
    missing = [name for name, f in form.fields.items() if f.required and name not in raw]
    if missing:
        return ConfigError(f"missing required key '{missing[0]}'", key=missing[0])
    ordered = sorted(form.errors.items(), key=lambda item: lines.get(item[0], 0))
    key, messages = ordered[0]
    if key == '__all__':
        return ConfigError(messages[0])
    return ConfigError(messages[0], key=key, line=lines.get(key))


@dataclass(frozen=True)
class PipelineConfig:
    """Validated run configuration; ``values`` holds the cleaned form data."""
    values: Mapping[str, object]
    path: Path | None = None
    lines: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, path=None) -> 'PipelineConfig':
        raw, lines = parse_lines(text)
        form = PipelineConfigForm(data=raw)
        unknown = [key for key in raw if key not in form.fields]
        if unknown:
            key = unknown[0]
            raise ConfigError('unknown key', key=key, line=lines[key])
        if not form.is_valid():
            raise _first_error(form, raw, lines)
        values = {k: v for k, v in form.cleaned_data.items() if k in raw}
        return cls(values, Path(path) if path is not None else None, lines)

    @classmethod
    def load(cls, path) -> 'PipelineConfig':
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except UnicodeDecodeError as exc:
            raise ConfigError(f'{path} is not UTF-8 text: {exc}') from exc
        config = cls.from_text(text, path)
        logger.debug('loaded %d keys from %s', len(config.values), path)
        return config

    def get(self, key: str, default=None):
        value = self.values.get(key)
        return default if value is None or value == '' else value

    def with_overrides(self, **overrides) -> 'PipelineConfig':
        """Copy with command-line values replacing config keys; ``None`` keeps the key."""
        values = dict(self.values)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return replace(self, values=values)

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path is not None else Path.cwd()

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"missing required key '{key}'", key=key)
        return value

    def _located(self, exc: ConfigError, prefix: str = '') -> ConfigError:
        """The same error under its config key and line."""
        if exc.key is None:
            return exc
        key = prefix + exc.key
        return ConfigError(str(exc).split(': ', 1)[-1], key=key, line=self.lines.get(key))

    # simulation

    @property
    def speckle(self) -> SpeckleParams:
        try:
            return SpeckleParams(
                grid_width=self.require('grid_width'),
                grid_height=self.require('grid_height'),
                coh_radius=self.require('coh_radius'),
                mean_intensity=self.require('mean_intensity'),
                n_frames=self.require('n_frames'),
                seed=self.require('seed'),
            )
        except ConfigError as exc:
            raise self._located(exc) from exc

    def arm(self, number: int) -> ArmParams:
        prefix = f'arm{number}_'
        try:
            return ArmParams(
                gain=self.get(prefix + 'gain', 1.0),
                offset=self.get(prefix + 'offset', ZERO),
                decorrelation=self.get(prefix + 'decorrelation', 0.0),
                read_noise_sigma=self.get(prefix + 'read_noise', 0.0),
                shot_noise=self.get(prefix + 'shot_noise', False),
            )
        except ConfigError as exc:
            raise self._located(exc, prefix) from exc

    def object_mask(self) -> ObjectMask | None:
        kind = self.get('object_kind', 'none')
        if kind == 'none':
            return None
        width, height = self.require('grid_width'), self.require('grid_height')
        if kind == 'custom':
            return builtin_mask('custom', width, height, path=self.resolve(self.require('object_path')))
        geometry = {name: self.get(f'object_{name}') for name in _OBJECT_GEOMETRY[kind]}
        return builtin_mask(kind, width, height, **{k: v for k, v in geometry.items() if v is not None})

    def sim_config(self) -> SimConfig:
        try:
            return SimConfig(
                speckle=self.speckle,
                arms=tuple(self.arm(number) for number in (1, 2, 3)),
                object=self.object_mask(),
                quantization_gain=self.get('quantization_gain', 1.0),
            )
        except ConfigError as exc:
            if exc.line is not None:
                raise
            raise self._located(exc) from exc

    # analysis

    def region(self, key: str) -> Region:
        return self.require(key)

    @property
    def search(self) -> SearchWindow:
        return self.get('search', SearchWindow.square(DEFAULT_SEARCH_RADIUS))

    @property
    def reference_arm(self) -> int:
        return self.get('reference_arm', 2)

    @property
    def histogram_bins(self) -> int:
        return self.get('histogram_bins', DEFAULT_HISTOGRAM_BINS)

    @property
    def study_window(self) -> int:
        return self.get('study_window', DEFAULT_STUDY_WINDOW)

    @property
    def threads(self) -> int | None:
        return self.get('threads')

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.get('output_dir', DEFAULT_OUTPUT_DIR))
