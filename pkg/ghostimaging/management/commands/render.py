import csv
import io

import numpy as np
from django.core.management.base import CommandError

from ghostimaging.exports import render
from ghostimaging.frames import read_stack
from ghostimaging.management.base import GhostLabCommand, RunRecord


def grid_from_csv(text: str) -> np.ndarray:
    """Values of a ghost-image (x,y,value) or correlation-map (dx,dy,value) CSV as a 2-D grid."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise CommandError('CSV holds no values')
    fields = ('x', 'y') if 'x' in rows[0] else ('dx', 'dy')
    if fields[0] not in rows[0] or 'value' not in rows[0]:
        raise CommandError('CSV must have x,y,value or dx,dy,value columns')
    xs = [int(r[fields[0]]) for r in rows]
    ys = [int(r[fields[1]]) for r in rows]
    x0, y0 = min(xs), min(ys)
    grid = np.full((max(ys) - y0 + 1, max(xs) - x0 + 1), np.nan)
    for x, y, r in zip(xs, ys, rows):
        if r['value'] != '':
            grid[y - y0, x - x0] = float(r['value'])
    return grid


class Command(GhostLabCommand):
    help = 'Render a stack frame, ghost image or correlation map as a PGM'
    verb = 'render'

    def add_command_arguments(self, parser):
        parser.add_argument('--input', required=True, help='GIS1 stack or CSV image')
        parser.add_argument('--frame', type=int, default=0, help='Frame index of a stack')
        parser.add_argument('--output', required=True, help='PGM file to write')
        parser.add_argument('--maxval', type=int, choices=[255, 65535], default=255)

    def run(self, batch, **options):
        source = self.input_path(options['input'])
        if source.suffix.lower() == '.csv':
            values = grid_from_csv(source.read_text(encoding='utf-8'))
            n_frames = None
        else:
            stack = read_stack(source)
            values = stack.frame(options['frame'])
            n_frames = stack.n_frames

        data, rendering = render(values, options['maxval'])
        output = self.input_path(options['output'])
        batch.add(output, data)
        batch.add(output.with_suffix('.txt'), rendering.sidecar_text(source.name))

        self.stdout.write(f"Rendered {source.name} ({values.shape[1]}x{values.shape[0]}) to {output.name}")
        if rendering.flat:
            self.stdout.write(self.style.WARNING("Flat data rendered at mid-gray"))
        if rendering.undefined:
            self.stdout.write(self.style.WARNING(f"{len(rendering.undefined)} undefined pixel(s) rendered as 0"))
        return RunRecord(summary=f'{source.name} -> {output.name}', n_frames=n_frames)
