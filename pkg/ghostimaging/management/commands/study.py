import math

import numpy as np
from django.core.management.base import CommandError

from ghostimaging.imaging import frame_windows, gap_study
from ghostimaging.management.base import GhostLabCommand, RunRecord


class Command(GhostLabCommand):
    help = 'Second- and third-order visibility on disjoint frame windows'
    verb = 'study'

    def add_command_arguments(self, parser):
        parser.add_argument('--window', type=int, help='Frames per window; overrides study_window')
        parser.add_argument('--count', type=int, help='Number of windows; defaults to all that fit')
        parser.add_argument('--reference-arm', type=int, help='Reference arm of the second-order images')
        parser.add_argument('--back', help='Background region in image coordinates')
        parser.add_argument('--obj', help='Object region in image coordinates')
        parser.add_argument('--d12', help='Translation from arm 1 to arm 2 as dx,dy')
        parser.add_argument('--d23', help='Translation from arm 2 to arm 3 as dx,dy')

    def run(self, batch, **options):
        reference_arm = options.get('reference_arm') or self.config.reference_arm
        if reference_arm not in (2, 3):
            raise CommandError(f'usage: --reference-arm must be 2 or 3, got {reference_arm}')
        arms = self.load_arms()
        test_region, ref2, ref3 = self.registered_regions(arms, options)
        windows = frame_windows(arms[0].n_frames, options.get('window') or self.config.study_window,
                                options.get('count'))
        points = gap_study(arms, test_region, ref2, ref3, windows,
                           self.region_option(options, 'back'), self.region_option(options, 'obj'),
                           reference_arm=reference_arm, threads=self.threads)

        rows = ['start,stop,v2,v3,gap']
        rows += [f'{p.start},{p.stop},{p.v2!r},{p.v3!r},{p.gap!r}' for p in points]
        batch.add('gap_study.csv', '\n'.join(rows) + '\n')

        gaps = np.array([p.gap for p in points])
        mean_gap = float(gaps.mean())
        stderr = float(gaps.std(ddof=1) / math.sqrt(gaps.size)) if gaps.size > 1 else 0.0
        for p in points:
            self.stdout.write(f"frames {p.start}:{p.stop}  V2 = {p.v2:.4f}  V3 = {p.v3:.4f}  gap = {p.gap:+.4f}")
        self.stdout.write("=" * 60)
        self.stdout.write(f"mean gap = {mean_gap:+.4f} ± {stderr:.4f} over {len(points)} window(s)")

        measurements = []
        for p in points:
            measurements.append({'order': 2, 'reference_arm': reference_arm, 'v': p.v2,
                                 'frame_start': p.start, 'frame_stop': p.stop})
            measurements.append({'order': 3, 'v': p.v3, 'frame_start': p.start, 'frame_stop': p.stop})
        return RunRecord(summary=f'mean V3 - V2 = {mean_gap:+.4f} ± {stderr:.4f} over {len(points)} windows',
                         n_frames=arms[0].n_frames, measurements=measurements)
