"""
Shared plumbing of the ghost-imaging management commands.

Every command accepts ``--config``, ``--out``, ``--seed``, ``--threads`` and
``--frames``. A flag beats the config file, which beats the settings
default. Outputs are staged in an ``ArtifactBatch`` and only land on disk
once the command finished without error.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError, transaction

from ..exceptions import AlignmentError, GhostLabError
from ..files import ArtifactBatch
from ..forms import RegionField
from ..frames import Displacement, FrameStack, read_stack, shift_region
from ..models import AnalysisRun, VisibilityMeasurement
from ..pipeline import PipelineConfig
from ..registration import RegistrationChain

logger = logging.getLogger(__name__)

ARM_FILES = ('arm1.gis', 'arm2.gis', 'arm3.gis')
REGISTRATION_FILE = 'registration.txt'


@dataclass
class RunRecord:
    """What a command reports to the run ledger."""
    summary: str
    n_frames: int | None = None
    seed: int | None = None
    measurements: list[dict] = field(default_factory=list)


class GhostLabCommand(BaseCommand):
    verb = None

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Pipeline configuration file (key = value lines)')
        parser.add_argument('--out', help='Output directory; overrides output_dir')
        parser.add_argument('--seed', type=int, help='Master seed (unsigned 64-bit)')
        parser.add_argument('--threads', type=int, help='Worker threads; defaults to GHOSTLAB_THREADS')
        parser.add_argument('--frames', type=int, help='Number of frames to simulate or analyse')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, batch: ArtifactBatch, **options) -> RunRecord:
        raise NotImplementedError('subclasses of GhostLabCommand must provide a run() method')

    def handle(self, *args, **options):
        try:
            self.config = self.load_config(options)
            self.threads = self.resolve_threads(options)
            self.out_dir = self.resolve_out_dir(options)
            self.frames = options.get('frames')
            if self.frames is not None and self.frames < 1:
                raise CommandError(f'--frames must be at least 1, got {self.frames}')
            with ArtifactBatch(self.out_dir) as batch:
                record = self.run(batch, **options)
                written = batch.paths
        except GhostLabError as exc:
            raise CommandError(str(exc)) from exc
        except OSError as exc:
            raise CommandError(f'{exc.filename or "I/O"}: {exc.strerror or exc}') from exc

        for path in written:
            logger.debug('committed %s', path)
        self.record(record)
        self.stdout.write(self.style.SUCCESS(f'{self.verb}: wrote {len(written)} file(s)'))

    # configuration

    def load_config(self, options) -> PipelineConfig:
        path = options.get('config')
        config = PipelineConfig.load(path) if path else PipelineConfig({})
        return config.with_overrides(seed=options.get('seed'), n_frames=options.get('frames'))

    def resolve_threads(self, options) -> int:
        threads = options.get('threads')
        if threads is None:
            threads = self.config.threads
        if threads is None:
            threads = getattr(settings, 'GHOSTLAB_THREADS', 1)
        if threads < 1:
            raise CommandError(f'--threads must be at least 1, got {threads}')
        return threads

    def resolve_out_dir(self, options) -> Path:
        if options.get('out'):
            return Path(options['out']).resolve()
        return self.config.output_dir.resolve()

    def input_path(self, path) -> Path:
        """Paths given on the command line are relative to the working directory."""
        return Path(path).resolve()

    # inputs

    def trim(self, stack: FrameStack) -> FrameStack:
        if self.frames is None:
            return stack
        if self.frames > stack.n_frames:
            raise AlignmentError(f'--frames {self.frames} exceeds the {stack.n_frames} recorded frames')
        return stack.select_frames(0, self.frames)

    def load_arms(self) -> tuple[FrameStack, FrameStack, FrameStack]:
        arms = tuple(self.trim(read_stack(self.out_dir / name)) for name in ARM_FILES)
        counts = {arm.n_frames for arm in arms}
        if len(counts) != 1:
            raise AlignmentError(f'arm stacks hold different frame counts: {[a.n_frames for a in arms]}')
        return arms

    def translations(self, options) -> tuple[Displacement, Displacement]:
        """Arm 1 to arm 2 and arm 2 to arm 3 translations, from flags or the registration report."""
        d12, d23 = options.get('d12'), options.get('d23')
        chain = None
        if d12 is None or d23 is None:
            report = self.out_dir / REGISTRATION_FILE
            chain = RegistrationChain.from_text(report.read_text(encoding='utf-8'))
        try:
            translation12 = Displacement.parse(d12) if d12 is not None else chain.arm12.translation
            translation23 = Displacement.parse(d23) if d23 is not None else chain.arm23.translation
        except ValueError as exc:
            raise CommandError(f'invalid displacement: {exc}') from exc
        return translation12, translation23

    def registered_regions(self, arms, options):
        """Test region of arm 1 and its registered counterparts ``C2`` and ``C3``."""
        arm1, arm2, arm3 = arms
        test_region = self.config.region('test_region')
        test_region.require_inside(arm1.width, arm1.height, what='test region')
        translation12, translation23 = self.translations(options)
        ref2 = shift_region(test_region, translation12, (arm2.width, arm2.height))
        ref3 = shift_region(ref2, translation23, (arm3.width, arm3.height))
        return test_region, ref2, ref3

    def region_option(self, options, name):
        """Region from the ``--<name>`` flag, else the ``<name>_region`` config key."""
        if options.get(name):
            try:
                return RegionField().clean(options[name])
            except ValidationError as exc:
                raise CommandError(f'--{name}: {exc.messages[0]}') from exc
        return self.config.region(f'{name}_region')

    # run ledger

    def record(self, record: RunRecord):
        config_path = str(self.config.path) if self.config.path is not None else ''
        seed = record.seed if record.seed is not None else self.config.get('seed')
        try:
            with transaction.atomic():
                run = AnalysisRun.objects.create(
                    verb=self.verb,
                    seed=str(seed) if seed is not None else None,
                    config_path=config_path,
                    output_dir=str(self.out_dir),
                    n_frames=record.n_frames,
                    summary=record.summary,
                )
                for measurement in record.measurements:
                    VisibilityMeasurement.objects.create(run=run, **measurement)
        except DatabaseError as exc:
            logger.warning('run ledger not updated: %s', exc)
