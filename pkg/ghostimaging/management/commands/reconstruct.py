import numpy as np
from django.core.management.base import CommandError

from ghostimaging.exports import render
from ghostimaging.imaging import bucket, ghost2, ghost3, reference_c2
from ghostimaging.management.base import GhostLabCommand, RunRecord


def image_artifacts(batch, stem, image):
    """Stage the CSV, PGM and sidecar of a ghost image."""
    data, rendering = render(image.values)
    batch.add(f'{stem}.csv', image.to_csv())
    batch.add(f'{stem}.pgm', data)
    batch.add(f'{stem}.txt', image.provenance_text() + rendering.sidecar_text(f'{stem}.csv'))


class Command(GhostLabCommand):
    help = 'Reconstruct a second- or third-order ghost image'
    verb = 'reconstruct'

    def add_command_arguments(self, parser):
        parser.add_argument('--order', type=int, required=True, help='Correlation order: 2 or 3')
        parser.add_argument('--reference-arm', type=int, help='Reference arm of a second-order image: 2 or 3')
        parser.add_argument('--d12', help='Translation from arm 1 to arm 2 as dx,dy')
        parser.add_argument('--d23', help='Translation from arm 2 to arm 3 as dx,dy')

    def run(self, batch, **options):
        order = options['order']
        if order not in (2, 3):
            raise CommandError(f'usage: --order must be 2 or 3, got {order}')
        reference_arm = options.get('reference_arm') or self.config.reference_arm
        if reference_arm not in (2, 3):
            raise CommandError(f'usage: --reference-arm must be 2 or 3, got {reference_arm}')

        arms = self.load_arms()
        arm1, arm2, arm3 = arms
        test_region, ref2, ref3 = self.registered_regions(arms, options)
        series = bucket(arm1, test_region)
        provenance = {'seed': arm1.meta.get('seed', ''), 'test_region': str(test_region)}

        if order == 2:
            provenance['reference_arm'] = str(reference_arm)
            if reference_arm == 2:
                image = ghost2(series, arm2, ref2, threads=self.threads, provenance=provenance)
            else:
                image = ghost2(series, arm3, ref3, threads=self.threads, provenance=provenance)
            stem = f'ghost2_arm{reference_arm}'
        else:
            image = ghost3(series, arm2, ref2, arm3, ref3, threads=self.threads, provenance=provenance)
            stem = 'ghost3'
            references = reference_c2(arm2, ref2, arm3, ref3)
            if not np.all(np.isnan(references.values)):
                self.stdout.write(f"Arm 2 / arm 3 pixel c2 (mean) = {np.nanmean(references.values):.4f}")

        image_artifacts(batch, stem, image)
        undefined = len(image.undefined_pixels)
        self.stdout.write(f"Order {order} ghost image {image.width}x{image.height} from {image.n_frames} frames")
        self.stdout.write(f"Reference regions: arm 2 {ref2}, arm 3 {ref3}")
        if undefined:
            self.stdout.write(self.style.WARNING(f"{undefined} undefined pixel(s)"))

        return RunRecord(summary=f'{stem}: {image.width}x{image.height}, {undefined} undefined',
                         n_frames=image.n_frames)
