import shutil
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.db import DatabaseError
from django.test import TestCase, override_settings

from ghostimaging.exports import decode_pgm
from ghostimaging.frames import FrameStack, read_stack, write_stack
from ghostimaging.imaging import GhostImage
from ghostimaging.models import AnalysisRun, VisibilityMeasurement

CONFIG = """\
grid_width = 48
grid_height = 48
coh_radius = 2.5
mean_intensity = 100
n_frames = 40
seed = 11
arm2_offset = 3,-2
arm3_offset = -2,1
object_kind = disk
object_radius = 4

anchor_region = 8,8,12,12
moving2_origin = 8,8,12,12
search = 6
test_region = 14,14,20,20
back_region = 0,0,20,4
obj_region = 8,8,4,4
output_dir = out
"""


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)
        self.config = self.tmp / 'run.cfg'
        self.config.write_text(CONFIG, encoding='utf-8')
        self.out = self.tmp / 'out'

    def call(self, verb, **options):
        stdout = StringIO()
        options.setdefault('config', str(self.config))
        call_command(verb, stdout=stdout, **options)
        return stdout.getvalue()


class SimulateCommandTests(CommandTestCase):
    def test_writes_the_arm_stacks(self):
        output = self.call('simulate')
        for name in ('arm1.gis', 'arm2.gis', 'arm3.gis', 'ground_truth.txt', 'object_mask.pgm'):
            self.assertTrue((self.out / name).exists(), name)
        self.assertIn('Grid: 48x48, 40 frames', output)
        self.assertIn('Seed: 11', output)
        self.assertIn('Arm 3 mean intensity', output)
        self.assertEqual(read_stack(self.out / 'arm2.gis').meta['offset'], '3,-2')
        self.assertEqual(AnalysisRun.objects.get().verb, 'simulate')

    def test_reruns_are_byte_identical(self):
        self.call('simulate', out=str(self.tmp / 'a'))
        self.call('simulate', out=str(self.tmp / 'b'), threads=3)
        for name in ('arm1.gis', 'arm2.gis', 'arm3.gis', 'ground_truth.txt', 'object_mask.pgm'):
            self.assertEqual((self.tmp / 'a' / name).read_bytes(), (self.tmp / 'b' / name).read_bytes())

    def test_flags_override_the_config(self):
        self.call('simulate', seed=12, frames=5)
        stack = read_stack(self.out / 'arm1.gis')
        self.assertEqual(stack.n_frames, 5)
        self.assertEqual(stack.meta['seed'], '12')

    def test_missing_key_fails_without_output(self):
        self.config.write_text(CONFIG.replace('grid_width = 48\n', ''), encoding='utf-8')
        with self.assertRaisesMessage(CommandError, 'grid_width'):
            self.call('simulate')
        self.assertFalse(self.out.exists())

    @override_settings(GHOSTLAB_THREADS=0)
    def test_thread_count_must_be_positive(self):
        with self.assertRaises(CommandError):
            self.call('simulate')


class PipelineRerunTests(CommandTestCase):
    def run_pipeline(self, out):
        options = {'out': str(out)}
        self.call('simulate', **options)
        self.call('register', **options)
        self.call('reconstruct', order=2, **options)
        self.call('reconstruct', order=3, **options)
        self.call('visibility', image=str(out / 'ghost2_arm2.csv'), **options)
        self.call('visibility', image=str(out / 'ghost3.csv'), **options)
        self.call('render', input=str(out / 'arm1.gis'), frame=3, output=str(out / 'frame3.pgm'), **options)
        self.call('render', input=str(out / 'ghost3.csv'), output=str(out / 'ghost3_render.pgm'), **options)

    def test_full_pipeline_reruns_are_byte_identical(self):
        first, second = self.tmp / 'a', self.tmp / 'b'
        self.run_pipeline(first)
        self.run_pipeline(second)
        names = sorted(p.name for p in first.iterdir())
        self.assertEqual(names, sorted(p.name for p in second.iterdir()))
        for name in ('registration.txt', 'ghost3.csv', 'ghost3_visibility.txt', 'frame3.txt', 'ghost3_render.pgm'):
            self.assertIn(name, names)
        for name in names:
            with self.subTest(name=name):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())


class PipelineCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.call('simulate')

    def test_register_reports_both_offsets(self):
        output = self.call('register')
        self.assertIn('d_max = (3, -2)', output)
        self.assertIn('d_max = (-5, 3)', output)
        report = (self.out / 'registration.txt').read_text()
        self.assertIn('arm12_translation=3,-2\n', report)
        self.assertIn('arm13_translation=-2,1\n', report)
        for name in ('map_12.csv', 'map_12.pgm', 'map_12.txt', 'map_23.csv', 'map_23.pgm', 'map_23.txt'):
            self.assertTrue((self.out / name).exists(), name)
        self.assertTrue((self.out / 'map_12.csv').read_text().startswith('dx,dy,value\n-6,-6,'))

    def test_reconstruct_from_the_registration_report(self):
        self.call('register')
        self.call('reconstruct', order=2)
        self.call('reconstruct', order=2, reference_arm=3)
        self.call('reconstruct', order=3)
        for stem in ('ghost2_arm2', 'ghost2_arm3', 'ghost3'):
            for suffix in ('.csv', '.pgm', '.txt'):
                self.assertTrue((self.out / f'{stem}{suffix}').exists(), stem + suffix)
        sidecar = (self.out / 'ghost2_arm3.txt').read_text()
        self.assertIn('reference_arm=3\n', sidecar)
        self.assertIn('reference_region=12,15,20,20\n', sidecar)

    def test_reconstruct_with_inline_translations(self):
        output = self.call('reconstruct', order=3, d12='3,-2', d23='-5,3')
        self.assertIn('Arm 2 / arm 3 pixel c2 (mean)', output)
        image = GhostImage.from_csv((self.out / 'ghost3.csv').read_text(), 3)
        self.assertEqual((image.width, image.height), (20, 20))

    def test_unsupported_order(self):
        with self.assertRaisesMessage(CommandError, 'usage'):
            self.call('reconstruct', order=4, d12='3,-2', d23='-5,3')
        self.assertFalse((self.out / 'ghost4.csv').exists())

    def test_translation_leaving_the_sensor_writes_nothing(self):
        with self.assertRaises(CommandError):
            self.call('reconstruct', order=2, d12='30,0', d23='0,0')
        self.assertEqual(sorted(p.name for p in self.out.glob('ghost*')), [])

    def test_visibility_of_a_reconstruction(self):
        self.call('reconstruct', order=2, d12='3,-2', d23='-5,3')
        output = self.call('visibility', image=str(self.out / 'ghost2_arm2.csv'))
        self.assertIn('V = ', output)
        self.assertIn('background mean', output)
        self.assertTrue((self.out / 'ghost2_arm2_visibility.csv').exists())
        self.assertTrue((self.out / 'ghost2_arm2_visibility.txt').exists())
        measurement = VisibilityMeasurement.objects.get()
        self.assertEqual((measurement.order, measurement.reference_arm), (2, 2))
        self.assertEqual(measurement.run.verb, 'visibility')

    def test_stats_of_a_simulated_arm(self):
        self.call('stats', stack=str(self.out / 'arm2.gis'), region='0,0,16,16', bins=10)
        stats = (self.out / 'stats.txt').read_text()
        self.assertIn('samples=10240\n', stats)
        self.assertEqual(len((self.out / 'histogram.csv').read_text().splitlines()), 11)

    def test_analysis_frames_flag(self):
        output = self.call('reconstruct', order=2, d12='3,-2', d23='-5,3', frames=10)
        self.assertIn('from 10 frames', output)
        with self.assertRaises(CommandError):
            self.call('reconstruct', order=2, d12='3,-2', d23='-5,3', frames=400)

    def test_study_writes_one_row_per_window(self):
        output = self.call('study', d12='3,-2', d23='-5,3', window=10, count=4)
        rows = (self.out / 'gap_study.csv').read_text().splitlines()
        self.assertEqual(rows[0], 'start,stop,v2,v3,gap')
        self.assertEqual([r.split(',')[:2] for r in rows[1:]], [['0', '10'], ['10', '20'], ['20', '30'], ['30', '40']])
        self.assertIn('mean gap', output)
        self.assertEqual(VisibilityMeasurement.objects.count(), 8)


class StandaloneCommandTests(TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)

    def call(self, verb, **options):
        stdout = StringIO()
        call_command(verb, stdout=stdout, out=str(self.tmp), **options)
        return stdout.getvalue()

    def test_visibility_of_constant_regions(self):
        values = np.full((4, 8), 0.3)
        values[:, 4:] = 0.1
        path = self.tmp / 'synthetic.csv'
        path.write_text(GhostImage(2, values, 100).to_csv(), encoding='utf-8')
        output = self.call('visibility', image=str(path), back='0,0,4,4', obj='4,0,4,4')
        self.assertIn('V = 0.5000 ± 0.0000', output)
        self.assertIn('v_stderr=0.0\n', (self.tmp / 'synthetic_visibility.txt').read_text())

    def test_visibility_of_an_empty_object_region(self):
        values = np.full((4, 8), 0.3)
        values[:, 4:] = np.nan
        path = self.tmp / 'holes.csv'
        path.write_text(GhostImage(2, values, 100).to_csv(), encoding='utf-8')
        with self.assertRaisesMessage(CommandError, 'obj region'):
            self.call('visibility', image=str(path), back='0,0,4,4', obj='4,0,4,4')

    def test_stats_of_a_constant_stack(self):
        path = self.tmp / 'flat.gis'
        write_stack(FrameStack(np.full((4, 5, 5), 9.0)), path)
        output = self.call('stats', stack=str(path))
        stats = (self.tmp / 'stats.txt').read_text()
        self.assertIn('mu2=0.0\n', stats)
        self.assertIn('mu3=0.0\n', stats)
        self.assertIn('g2=1.0\n', stats)
        self.assertIn('g2(0) = 1.0', output)

    def test_render_a_frame(self):
        pixels = np.zeros((2, 4, 6))
        pixels[1] = np.arange(24).reshape(4, 6)
        path = self.tmp / 'arm.gis'
        write_stack(FrameStack(pixels), path)
        first, second = self.tmp / 'a.pgm', self.tmp / 'b.pgm'
        self.call('render', input=str(path), frame=1, output=str(first))
        self.call('render', input=str(path), frame=1, output=str(second))
        self.assertEqual(first.read_bytes(), second.read_bytes())
        gray, maxval = decode_pgm(first.read_bytes())
        self.assertEqual((gray.shape, int(gray.max()), maxval), ((4, 6), 255, 255))
        self.assertIn('min=0.0\n', (self.tmp / 'a.txt').read_text())

    def test_render_a_flat_frame(self):
        path = self.tmp / 'arm.gis'
        write_stack(FrameStack(np.full((1, 3, 3), 40.0)), path)
        output = self.call('render', input=str(path), output=str(self.tmp / 'flat.pgm'))
        gray, _ = decode_pgm((self.tmp / 'flat.pgm').read_bytes())
        self.assertTrue(np.all(gray == 127))
        self.assertIn('mid-gray', output)

    def test_render_frame_out_of_range(self):
        path = self.tmp / 'arm.gis'
        write_stack(FrameStack(np.ones((2, 3, 3))), path)
        with self.assertRaisesMessage(CommandError, 'frame index 5'):
            self.call('render', input=str(path), frame=5, output=str(self.tmp / 'x.pgm'))
        self.assertFalse((self.tmp / 'x.pgm').exists())

    def test_render_an_image_with_undefined_pixels(self):
        path = self.tmp / 'ghost.csv'
        path.write_text(GhostImage(2, np.array([[0.1, np.nan], [0.3, 0.2]]), 10).to_csv(), encoding='utf-8')
        self.call('render', input=str(path), output=str(self.tmp / 'ghost.pgm'))
        gray, _ = decode_pgm((self.tmp / 'ghost.pgm').read_bytes())
        self.assertEqual(gray[0, 1], 0)
        self.assertIn('undefined_pixels=1,0\n', (self.tmp / 'ghost.txt').read_text())

    def test_ledger_failure_does_not_fail_the_command(self):
        path = self.tmp / 'flat.gis'
        write_stack(FrameStack(np.full((2, 3, 3), 2.0)), path)
        with mock.patch('ghostimaging.management.base.AnalysisRun.objects.create',
                        side_effect=DatabaseError('no such table')):
            with self.assertLogs('ghostimaging.management.base', 'WARNING'):
                self.call('stats', stack=str(path))
        self.assertTrue((self.tmp / 'stats.txt').exists())
        self.assertEqual(AnalysisRun.objects.count(), 0)
