import numpy as np
from django.test import SimpleTestCase, tag

from ghostimaging.exceptions import AlignmentError, BoundsError, RegistrationError
from ghostimaging.frames import Displacement, FrameStack, Region, shift_region
from ghostimaging.registration import (
    CorrelationMap, RegistrationChain, SearchWindow, chain_register, correlation_map, frame_spatial_c2, half_level,
    profile_fwhm, register, register_pair,
)
from ghostimaging.specklesim import ArmParams, SimConfig, SpeckleParams, decorrelation_for_c2, simulate


def arm_stacks(offsets, n_frames=20, seed=3, coh_radius=2.0, size=64, decorrelations=(0.0, 0.0, 0.0)):
    arms = tuple(ArmParams(offset=Displacement(*o), decorrelation=d) for o, d in zip(offsets, decorrelations))
    config = SimConfig(SpeckleParams(size, size, coh_radius, 100.0, n_frames, seed=seed), arms)
    return simulate(config, quantize=False).stacks


class SearchWindowTests(SimpleTestCase):
    def test_parse(self):
        self.assertEqual(SearchWindow.parse('3'), SearchWindow(-3, 3, -3, 3))
        self.assertEqual(SearchWindow.parse('-1,2,0,4').shape, (5, 4))
        with self.assertRaises(ValueError):
            SearchWindow.parse('1,2')


class CorrelationMapTests(SimpleTestCase):
    def test_frame_spatial_c2_of_identical_views(self):
        frame = np.random.default_rng(0).exponential(1.0, (8, 8))
        self.assertAlmostEqual(frame_spatial_c2(frame, frame).value, 1.0, places=12)
        self.assertIsNone(frame_spatial_c2(np.ones((4, 4)), frame[:4, :4]).value)

    def test_identical_stacks_register_at_zero(self):
        arm1, _, _ = arm_stacks([(0, 0)] * 3)
        anchor = Region(20, 20, 16, 16)
        result, cmap = register_pair(arm1, anchor, arm1, anchor, SearchWindow.square(4))
        self.assertEqual(result.d_max, Displacement(0, 0))
        self.assertAlmostEqual(result.peak_value, 1.0, places=12)
        self.assertEqual(result.distance, 0.0)
        self.assertEqual(cmap.values.shape, (9, 9))

    def test_known_offset_is_recovered(self):
        arm1, arm2, _ = arm_stacks([(0, 0), (3, -2), (0, 0)])
        anchor = Region(20, 20, 24, 24)
        result, _ = register_pair(arm1, anchor, arm2, anchor, SearchWindow.square(8))
        self.assertEqual(result.d_max, Displacement(3, -2))
        self.assertEqual(result.translation, Displacement(3, -2))
        self.assertEqual(result.map_region(anchor), Region(23, 18, 24, 24))
        self.assertAlmostEqual(result.distance, np.hypot(3, 2))
        self.assertFalse(result.on_boundary)

    def test_random_offsets_are_recovered(self):
        rng = np.random.default_rng(11)
        anchor = Region(20, 20, 24, 24)
        for trial in range(5):
            offset = tuple(int(v) for v in rng.integers(-10, 11, size=2))
            arm1, arm2, _ = arm_stacks([(0, 0), offset, (0, 0)], seed=100 + trial)
            result, _ = register_pair(arm1, anchor, arm2, anchor, SearchWindow.square(12))
            self.assertEqual(result.d_max, Displacement(*offset))

    def test_threads_do_not_change_the_map(self):
        arm1, arm2, _ = arm_stacks([(0, 0), (1, 1), (0, 0)], n_frames=6)
        anchor = Region(20, 20, 16, 16)
        one = correlation_map(arm1, anchor, arm2, anchor, SearchWindow.square(3), threads=1)
        four = correlation_map(arm1, anchor, arm2, anchor, SearchWindow.square(3), threads=4)
        np.testing.assert_array_equal(one.values, four.values)

    def test_peak_width_follows_the_speckle_size(self):
        params = SpeckleParams.from_fwhm(6.0, grid_width=64, grid_height=64, mean_intensity=100.0,
                                         n_frames=30, seed=21)
        config = SimConfig(params, (ArmParams(),) * 3)
        arm1 = simulate(config, quantize=False).stacks[0]
        anchor = Region(12, 12, 40, 40)
        result, _ = register_pair(arm1, anchor, arm1, anchor, SearchWindow.square(10))
        self.assertGreater(result.fwhm_x, 4.8)
        self.assertLess(result.fwhm_x, 7.2)
        self.assertGreater(result.fwhm_y, 4.8)
        self.assertLess(result.fwhm_y, 7.2)

    def test_peak_on_the_window_edge_is_flagged(self):
        arm1, arm2, _ = arm_stacks([(0, 0), (5, 0), (0, 0)], n_frames=8)
        anchor = Region(20, 20, 16, 16)
        with self.assertLogs('ghostimaging.registration', 'WARNING'):
            result, _ = register_pair(arm1, anchor, arm2, anchor, SearchWindow(-5, 5, -2, 2))
        self.assertEqual(result.d_max, Displacement(5, 0))
        self.assertTrue(result.on_boundary)

    def test_search_leaving_the_sensor(self):
        arm1, arm2, _ = arm_stacks([(0, 0)] * 3, n_frames=2)
        with self.assertRaises(BoundsError):
            correlation_map(arm1, Region(2, 2, 8, 8), arm2, Region(2, 2, 8, 8), SearchWindow.square(4))

    def test_frame_counts_must_agree(self):
        arm1, arm2, _ = arm_stacks([(0, 0)] * 3, n_frames=4)
        anchor = Region(20, 20, 8, 8)
        with self.assertRaises(AlignmentError):
            correlation_map(arm1, anchor, arm2.select_frames(0, 3), anchor, SearchWindow.square(1))

    def test_flat_stacks_have_no_registration(self):
        flat = FrameStack(np.full((3, 16, 16), 5.0))
        anchor = Region(4, 4, 4, 4)
        with self.assertLogs('ghostimaging.registration', 'WARNING'):
            cmap = correlation_map(flat, anchor, flat, anchor, SearchWindow.square(2))
        with self.assertRaises(RegistrationError):
            register(cmap, anchor, anchor)


class PeakTests(SimpleTestCase):
    def test_fwhm_interpolates_the_half_level(self):
        profile = np.array([0.0, 0.25, 1.0, 0.25, 0.0])
        self.assertAlmostEqual(profile_fwhm(profile, 2, 0.5), 4.0 / 3.0)

    def synthetic_map(self, values, window):
        return CorrelationMap(window, np.asarray(values, dtype=np.float64), np.ones(window.shape, dtype=int), 1)

    def test_half_level_sits_above_the_median(self):
        window = SearchWindow.square(1)
        values = np.full(window.shape, 0.2)
        values[1, 1] = 1.0
        self.assertAlmostEqual(half_level(self.synthetic_map(values, window), 1.0), 0.6)

    def test_gaussian_peak_width(self):
        sigma = 2.0
        window = SearchWindow.square(10)
        dy, dx = np.mgrid[window.dy_min:window.dy_max + 1, window.dx_min:window.dx_max + 1]
        values = np.exp(-(dx ** 2 + dy ** 2) / (2 * sigma ** 2))
        anchor = Region(20, 20, 8, 8)
        result = register(self.synthetic_map(values, window), anchor, anchor)
        self.assertEqual(result.d_max, Displacement(0, 0))
        self.assertAlmostEqual(result.fwhm_x, 2.355 * sigma, delta=0.1 * 2.355 * sigma)
        self.assertAlmostEqual(result.fwhm_y, 2.355 * sigma, delta=0.1 * 2.355 * sigma)

    def test_delta_peak_is_narrow(self):
        window = SearchWindow.square(5)
        values = np.zeros(window.shape)
        values[7, 4] = 1.0
        anchor = Region(20, 20, 8, 8)
        result = register(self.synthetic_map(values, window), anchor, anchor)
        self.assertEqual(result.d_max, Displacement(-1, 2))
        self.assertLessEqual(result.fwhm_x, 2.0)
        self.assertLessEqual(result.fwhm_y, 2.0)

    def test_ties_prefer_the_smallest_displacement_then_dy(self):
        window = SearchWindow.square(1)
        values = np.zeros(window.shape)
        values[1, 2] = 1.0  # dx=1, dy=0
        values[0, 1] = 1.0  # dx=0, dy=-1
        values[0, 0] = 1.0  # dx=-1, dy=-1
        cmap = CorrelationMap(window, values, np.ones(window.shape, dtype=int), 1)
        anchor = Region(5, 5, 4, 4)
        self.assertEqual(register(cmap, anchor, anchor).d_max, Displacement(0, -1))


class MapPropertyTests(SimpleTestCase):
    anchor = Region(20, 20, 24, 24)

    def test_swapping_the_arms_negates_the_displacement(self):
        arm1, arm2, _ = arm_stacks([(0, 0), (2, -1), (0, 0)], n_frames=8)
        search = SearchWindow.square(3)
        forward = correlation_map(arm1, self.anchor, arm2, self.anchor, search)
        for d in search.displacements():
            shifted = shift_region(self.anchor, d)
            backward = correlation_map(arm2, shifted, arm1, shifted, SearchWindow(-d.dx, -d.dx, -d.dy, -d.dy))
            self.assertAlmostEqual(backward.value(-d), forward.value(d), delta=1e-12)

    def test_true_peak_dominates_distant_displacements(self):
        arm1, arm2, _ = arm_stacks([(0, 0), (3, -2), (0, 0)])
        result, cmap = register_pair(arm1, self.anchor, arm2, self.anchor, SearchWindow.square(10))
        self.assertEqual(result.d_max, Displacement(3, -2))
        radius = 2 * max(result.fwhm_x, result.fwhm_y)
        distant = [cmap.value(d) for d in cmap.window.displacements() if (d - result.d_max).norm > radius]
        self.assertTrue(distant)
        self.assertGreater(result.peak_value - max(distant), 0.5)


@tag('slow')
class RecoveryTrialTests(SimpleTestCase):
    anchor = Region(20, 20, 24, 24)
    search = SearchWindow.square(11)

    def offsets(self, seed):
        rng = np.random.default_rng(seed)
        return [tuple(int(v) for v in rng.integers(-10, 11, size=2)) for _ in range(50)]

    def test_clean_arms_are_recovered_exactly(self):
        for trial, offset in enumerate(self.offsets(50)):
            arm1, arm2, _ = arm_stacks([(0, 0), offset, (0, 0)], seed=500 + trial)
            result, _ = register_pair(arm1, self.anchor, arm2, self.anchor, self.search)
            with self.subTest(trial=trial, offset=offset):
                self.assertEqual(result.d_max, Displacement(*offset))

    def test_imperfect_arms_land_within_one_pixel(self):
        decorrelation = decorrelation_for_c2(0.88)
        self.assertAlmostEqual(decorrelation, 0.3506, delta=1e-3)
        hits = 0
        for trial, offset in enumerate(self.offsets(51)):
            arm1, arm2, _ = arm_stacks([(0, 0), offset, (0, 0)], seed=700 + trial,
                                       decorrelations=(0.0, decorrelation, 0.0))
            result, _ = register_pair(arm1, self.anchor, arm2, self.anchor, self.search)
            error = result.d_max - Displacement(*offset)
            hits += max(abs(error.dx), abs(error.dy)) <= 1
        self.assertGreaterEqual(hits, 48)


class ChainTests(SimpleTestCase):
    def test_chain_registers_both_reference_arms(self):
        arm1, arm2, arm3 = arm_stacks([(0, 0), (3, -2), (-4, 1)])
        maps = []
        chain = chain_register(arm1, arm2, arm3, Region(20, 20, 24, 24), Region(20, 20, 24, 24),
                               SearchWindow.square(12), maps=maps)
        self.assertEqual(chain.arm12.d_max, Displacement(3, -2))
        self.assertEqual(chain.arm23.d_max, Displacement(-7, 3))
        self.assertEqual(chain.arm3_translation, Displacement(-4, 1))
        self.assertEqual(len(maps), 2)

    def test_report_text_is_read_back(self):
        arm1, arm2, arm3 = arm_stacks([(0, 0), (2, 1), (1, 1)], n_frames=6)
        anchor = Region(20, 20, 16, 16)
        chain = chain_register(arm1, arm2, arm3, anchor, anchor, SearchWindow.square(4))
        self.assertEqual(RegistrationChain.from_text(chain.to_text()), chain)
        with self.assertRaises(RegistrationError):
            RegistrationChain.from_text('arm12_d_max=1,2\n')
