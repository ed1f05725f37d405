import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from ghostimaging.exceptions import ConfigError, GeometryError
from ghostimaging.frames import Displacement, Region
from ghostimaging.pipeline import PipelineConfig, parse_lines
from ghostimaging.registration import SearchWindow

BASE = """\
# three-arm run
grid_width = 48
grid_height = 48
coh_radius = 2.5
mean_intensity = 100
n_frames = 20
seed = 11
"""


class ParseTests(SimpleTestCase):
    def test_comments_and_blank_lines(self):
        values, lines = parse_lines('# header\n\nseed = 3  # inline\n')
        self.assertEqual(values, {'seed': '3'})
        self.assertEqual(lines, {'seed': 3})

    def test_hash_inside_a_value_is_kept(self):
        values, _ = parse_lines('object_path = masks/#2.pgm\noutput_dir = runs/a#b # trailing\n#seed = 4\n')
        self.assertEqual(values, {'object_path': 'masks/#2.pgm', 'output_dir': 'runs/a#b'})

    def test_line_without_equals(self):
        with self.assertRaisesMessage(ConfigError, 'line 2:'):
            parse_lines('seed = 1\nseed 2\n')

    def test_duplicate_key(self):
        with self.assertRaisesMessage(ConfigError, 'line 3: seed: duplicate key'):
            parse_lines('seed = 1\n\nseed = 2\n')


class PipelineConfigTests(SimpleTestCase):
    def test_minimal_config(self):
        config = PipelineConfig.from_text(BASE)
        sim = config.sim_config()
        self.assertEqual(sim.speckle.grid_width, 48)
        self.assertEqual(sim.speckle.seed, 11)
        self.assertEqual(sim.arms[1].offset, Displacement(0, 0))
        self.assertEqual(config.search, SearchWindow.square(8))
        self.assertEqual(config.reference_arm, 2)

    def test_missing_required_key(self):
        text = BASE.replace('grid_width = 48\n', '')
        with self.assertRaisesMessage(ConfigError, "missing required key 'grid_width'"):
            PipelineConfig.from_text(text)

    def test_unknown_key_names_its_line(self):
        with self.assertRaisesMessage(ConfigError, 'line 8: colour: unknown key'):
            PipelineConfig.from_text(BASE + 'colour = blue\n')

    def test_invalid_value_names_key_and_line(self):
        with self.assertRaises(ConfigError) as ctx:
            PipelineConfig.from_text(BASE.replace('coh_radius = 2.5', 'coh_radius = wide'))
        self.assertEqual((ctx.exception.key, ctx.exception.line), ('coh_radius', 4))

    def test_arm_and_analysis_keys(self):
        config = PipelineConfig.from_text(BASE + (
            'arm2_offset = 3,-2\n'
            'arm3_decorrelation = 0.35\n'
            'arm1_shot_noise = yes\n'
            'anchor_region = 8,8,12,12\n'
            'search = -2,4,-3,3\n'
            'reference_arm = 3\n'
        ))
        sim = config.sim_config()
        self.assertEqual(sim.arms[1].offset, Displacement(3, -2))
        self.assertEqual(sim.arms[2].decorrelation, 0.35)
        self.assertTrue(sim.arms[0].shot_noise)
        self.assertEqual(config.region('anchor_region'), Region(8, 8, 12, 12))
        self.assertEqual(config.search, SearchWindow(-2, 4, -3, 3))
        self.assertEqual(config.reference_arm, 3)

    def test_parameter_error_points_at_the_arm_key(self):
        config = PipelineConfig.from_text(BASE + 'arm2_gain = 0\n')
        with self.assertRaises(ConfigError) as ctx:
            config.sim_config()
        self.assertEqual((ctx.exception.key, ctx.exception.line), ('arm2_gain', 8))

    def test_speckle_radius_error_points_at_its_line(self):
        config = PipelineConfig.from_text(BASE.replace('coh_radius = 2.5', 'coh_radius = 20'))
        with self.assertRaisesMessage(ConfigError, 'line 4: coh_radius:'):
            config.sim_config()

    def test_missing_analysis_region(self):
        with self.assertRaisesMessage(ConfigError, "missing required key 'test_region'"):
            PipelineConfig.from_text(BASE).region('test_region')

    def test_custom_object_needs_a_path(self):
        with self.assertRaises(ConfigError) as ctx:
            PipelineConfig.from_text(BASE + 'object_kind = custom\n')
        self.assertEqual(ctx.exception.key, 'object_path')

    def test_builtin_object(self):
        config = PipelineConfig.from_text(BASE + 'object_kind = disk\nobject_radius = 4\n')
        self.assertEqual(int((config.sim_config().object.transmission == 0).sum()), 52)

    def test_object_that_does_not_fit(self):
        config = PipelineConfig.from_text(BASE + 'object_kind = disk\nobject_radius = 30\n')
        with self.assertRaises(GeometryError):
            config.sim_config()

    def test_paths_resolve_against_the_config_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'runs' / 'ghost.cfg'
            path.parent.mkdir()
            path.write_text(BASE + 'output_dir = results\n', encoding='utf-8')
            config = PipelineConfig.load(path)
            self.assertEqual(config.output_dir, path.parent / 'results')
            self.assertEqual(config.path, path)

    def test_overrides_replace_config_values(self):
        config = PipelineConfig.from_text(BASE).with_overrides(seed=99, n_frames=None)
        self.assertEqual(config.speckle.seed, 99)
        self.assertEqual(config.speckle.n_frames, 20)
