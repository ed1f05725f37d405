from ghostimaging.exports import mask_pgm
from ghostimaging.frames import encode_stack
from ghostimaging.management.base import ARM_FILES, GhostLabCommand, RunRecord
from ghostimaging.specklesim import simulate


class Command(GhostLabCommand):
    help = 'Simulate the three arm frame stacks of a configuration'
    verb = 'simulate'

    def run(self, batch, **options):
        sim_config = self.config.sim_config()
        speckle = sim_config.speckle
        result = simulate(sim_config, threads=self.threads)

        for name, stack in zip(ARM_FILES, result.stacks):
            batch.add(name, encode_stack(stack))
        batch.add('ground_truth.txt', result.truth.to_text())
        batch.add('object_mask.pgm', mask_pgm(sim_config.object.transmission))

        self.stdout.write(f"Grid: {speckle.grid_width}x{speckle.grid_height}, {speckle.n_frames} frames")
        self.stdout.write(f"Seed: {speckle.seed}")
        self.stdout.write(f"Speckle radius: {speckle.coh_radius:.4g} px (intensity FWHM {speckle.intensity_fwhm:.4g} px)")
        means = []
        for number, stack in enumerate(result.stacks, start=1):
            mean = float(stack.pixels.mean())
            means.append(mean)
            self.stdout.write(f"Arm {number} mean intensity: {mean:.4f}")

        return RunRecord(
            summary='mean intensities ' + ', '.join(f'{m:.4f}' for m in means),
            n_frames=speckle.n_frames,
            seed=speckle.seed,
        )
