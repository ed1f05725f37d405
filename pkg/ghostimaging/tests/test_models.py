from django.contrib import admin
from django.test import TestCase

from ghostimaging.models import AnalysisRun, VisibilityMeasurement


class RunLedgerTests(TestCase):
    def setUp(self):
        self.run = AnalysisRun.objects.create(verb='study', seed=str(2 ** 64 - 1), output_dir='/tmp/out',
                                              n_frames=800, summary='mean V3 - V2 = +0.0100')

    def test_full_range_seed_is_stored(self):
        self.assertEqual(AnalysisRun.objects.get().seed, '18446744073709551615')

    def test_string_representations(self):
        measurement = VisibilityMeasurement.objects.create(run=self.run, order=3, v=0.3125)
        self.assertTrue(str(self.run).startswith('Gap study -> /tmp/out'))
        self.assertEqual(str(measurement), 'V3 = 0.3125 (Gap study)')

    def test_measurements_follow_their_run(self):
        VisibilityMeasurement.objects.create(run=self.run, order=2, reference_arm=2, v=0.25,
                                             frame_start=0, frame_stop=400)
        self.assertEqual(self.run.measurements.count(), 1)
        self.run.delete()
        self.assertFalse(VisibilityMeasurement.objects.exists())

    def test_admin_registration(self):
        self.assertTrue(admin.site.is_registered(AnalysisRun))
        self.assertTrue(admin.site.is_registered(VisibilityMeasurement))
        frame_window = admin.site._registry[VisibilityMeasurement].frame_window
        self.assertEqual(frame_window(VisibilityMeasurement(run=self.run, order=2, v=0.1)), 'All frames')
        self.assertEqual(frame_window(VisibilityMeasurement(run=self.run, order=2, v=0.1,
                                                            frame_start=0, frame_stop=400)), '0:400')
