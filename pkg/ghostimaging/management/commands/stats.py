import math

import numpy as np
from django.conf import settings

from ghostimaging.estimators import pooled_summary
from ghostimaging.frames import crop, read_stack
from ghostimaging.management.base import GhostLabCommand, RunRecord


def _fmt(value) -> str:
    value = float(value)
    return 'undefined' if math.isnan(value) else repr(value)


class Command(GhostLabCommand):
    help = 'Pooled intensity statistics and histogram of a frame stack'
    verb = 'stats'

    def add_command_arguments(self, parser):
        parser.add_argument('--stack', required=True, help='GIS1 stack file')
        parser.add_argument('--region', help='Region x0,y0,width,height; defaults to the whole frame')
        parser.add_argument('--bins', type=int, help='Histogram bins; overrides histogram_bins')

    def run(self, batch, **options):
        stack = self.trim(read_stack(self.input_path(options['stack'])))
        if options.get('region'):
            region = self.region_option(options, 'region')
            stack = crop(stack, region)
        else:
            region = None
        bins = options.get('bins') or self.config.histogram_bins

        samples = stack.pixels.ravel()
        summary = pooled_summary(stack.pixels, chunk_frames=getattr(settings, 'GHOSTLAB_CHUNK_FRAMES', 64),
                                 threads=self.threads)
        mean, mu2, mu3 = summary.mean(), summary.mu2(), summary.mu3()
        with np.errstate(divide='ignore', invalid='ignore'):
            g2 = summary.g2()
            skew_ratio = mu3 / mean ** 3

        lines = [
            f'stack={options["stack"]}',
            f'region={region if region is not None else "full"}',
            f'n_frames={stack.n_frames}',
            f'samples={summary.n}',
            f'mean={_fmt(mean)}',
            f'mu2={_fmt(mu2)}',
            f'mu3={_fmt(mu3)}',
            f'g2={_fmt(g2)}',
            f'mu3_over_mean3={_fmt(skew_ratio)}',
        ]
        batch.add('stats.txt', '\n'.join(lines) + '\n')

        counts, edges = np.histogram(samples, bins=bins)
        rows = ['bin_low,bin_high,count']
        rows += [f'{edges[i]!r},{edges[i + 1]!r},{int(counts[i])}' for i in range(len(counts))]
        batch.add('histogram.csv', '\n'.join(rows) + '\n')

        self.stdout.write(f"Samples: {summary.n} ({stack.n_frames} frames)")
        self.stdout.write(f"<I> = {_fmt(mean)}")
        self.stdout.write(f"mu2 = {_fmt(mu2)}")
        self.stdout.write(f"mu3 = {_fmt(mu3)}")
        self.stdout.write(f"g2(0) = {_fmt(g2)}")
        self.stdout.write(f"mu3/<I>^3 = {_fmt(skew_ratio)}")

        return RunRecord(summary=f'g2(0)={_fmt(g2)} over {summary.n} samples', n_frames=stack.n_frames,
                         seed=stack.meta.get('seed'))
