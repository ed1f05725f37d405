from django.core.management.base import CommandError

from ghostimaging.exports import render
from ghostimaging.management.base import REGISTRATION_FILE, GhostLabCommand, RunRecord
from ghostimaging.registration import SearchWindow, chain_register


class Command(GhostLabCommand):
    help = 'Register arm 2 on arm 1 and arm 3 on arm 2 by correlation maps'
    verb = 'register'

    def add_command_arguments(self, parser):
        parser.add_argument('--search', help='Search window: radius or dx_min,dx_max,dy_min,dy_max')

    def run(self, batch, **options):
        arm1, arm2, arm3 = self.load_arms()
        search = self.config.search
        if options.get('search'):
            try:
                search = SearchWindow.parse(options['search'])
            except ValueError as exc:
                raise CommandError(f'invalid --search: {exc}') from exc
        maps = []
        chain = chain_register(
            arm1, arm2, arm3,
            anchor=self.config.region('anchor_region'),
            moving2_origin=self.config.region('moving2_origin'),
            search=search,
            moving3_origin=self.config.get('moving3_origin'),
            threads=self.threads,
            maps=maps,
        )

        batch.add(REGISTRATION_FILE, chain.to_text())
        for suffix, cmap in zip(('12', '23'), maps):
            data, rendering = render(cmap.values)
            batch.add(f'map_{suffix}.csv', cmap.to_csv())
            batch.add(f'map_{suffix}.pgm', data)
            batch.add(f'map_{suffix}.txt', rendering.sidecar_text(f'map_{suffix}.csv') + f'search={search}\n')

        for label, result in (('1 -> 2', chain.arm12), ('2 -> 3', chain.arm23)):
            self.stdout.write(f"Arms {label}:")
            self.stdout.write(f"  d_max = ({result.d_max.dx}, {result.d_max.dy})")
            self.stdout.write(f"  peak = {result.peak_value:.4f}")
            self.stdout.write(f"  FWHM = ({result.fwhm_x:.2f}, {result.fwhm_y:.2f})")
            self.stdout.write(f"  distance = {result.distance:.2f}")
            if result.on_boundary:
                self.stdout.write(self.style.WARNING("  peak lies on the search window boundary; widen --search"))

        return RunRecord(
            summary=(f'd12={chain.arm12.d_max} peak {chain.arm12.peak_value:.4f}; '
                     f'd23={chain.arm23.d_max} peak {chain.arm23.peak_value:.4f}'),
            n_frames=arm1.n_frames,
        )
