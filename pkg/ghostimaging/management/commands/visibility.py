from pathlib import Path

from ghostimaging.imaging import GhostImage, visibility
from ghostimaging.management.base import GhostLabCommand, RunRecord


def read_sidecar(path: Path) -> dict[str, str]:
    if not path.exists():
        return {}
    values = {}
    for line in path.read_text(encoding='utf-8').splitlines():
        key, sep, value = line.partition('=')
        if sep:
            values[key] = value
    return values


class Command(GhostLabCommand):
    help = 'Measure the visibility of a ghost image'
    verb = 'visibility'

    def add_command_arguments(self, parser):
        parser.add_argument('--image', required=True, help='Ghost image CSV')
        parser.add_argument('--back', help='Background region x0,y0,width,height (image coordinates)')
        parser.add_argument('--obj', help='Object region x0,y0,width,height (image coordinates)')

    def run(self, batch, **options):
        path = self.input_path(options['image'])
        sidecar = read_sidecar(path.with_suffix('.txt'))
        order = int(sidecar.get('order', 3 if path.stem.startswith('ghost3') else 2))
        image = GhostImage.from_csv(path.read_text(encoding='utf-8'), order,
                                    int(sidecar.get('n_frames', 0)), sidecar)
        report = visibility(image, self.region_option(options, 'back'), self.region_option(options, 'obj'))

        stem = path.parent / f'{path.stem}_visibility'
        batch.add(stem.with_suffix('.csv'), report.to_csv())
        batch.add(stem.with_suffix('.txt'), report.to_text())

        self.stdout.write(f"V = {report.v:.4f} ± {report.v_stderr:.4f}")
        self.stdout.write(f"background mean = {report.cj_back:.6f} ({report.n_back} px)")
        self.stdout.write(f"object mean = {report.cj_obj:.6f} ({report.n_obj} px)")

        reference_arm = sidecar.get('reference_arm')
        measurement = {
            'order': report.order,
            'reference_arm': int(reference_arm) if reference_arm else None,
            'v': report.v,
            'v_stderr': report.v_stderr,
            'cj_back': report.cj_back,
            'cj_obj': report.cj_obj,
        }
        return RunRecord(summary=f'V{report.order} = {report.v:.4f} ± {report.v_stderr:.4f} ({path.name})',
                         n_frames=image.n_frames or None, measurements=[measurement])
