"""Simulate a relaxed scan of one phantom and reconstruct it.

Run with ``python3 demos/quickstart.py``. Writes PGM images next to this file.
"""

from pathlib import Path

from debyempi import (FOV, CoreStageConfig, DeconvConfig, add_noise, core_operator_apply,
                      core_stage_solve, default_trajectory, deconvolution_stage, forward_debye,
                      forward_langevin, psnr, relaxation_adaption, ssim, trace_of)
from debyempi.io import save_pgm
from debyempi.phantoms import builtin_phantoms, rasterize_phantom

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

# a 24 mm field of view scanned by the default Lissajous trajectory
trajectory = default_trajectory()
a = trajectory.amplitudes[0]
fov = FOV.symmetric(a, a)

# simulate on a finer grid than we reconstruct on
truth = rasterize_phantom(builtin_phantoms()["icecream"], (32, 32), fov)
fine = rasterize_phantom(builtin_phantoms()["icecream"], (64, 64), fov)
scan = forward_langevin(fine, trajectory)
scan = add_noise(forward_debye(scan, 5e-6), snr_db=40.0, seed=0)
print(f"scan: {scan.L} samples, {scan.n} channels, model {scan.model}")

# stage 1: undo the relaxation
adapted = relaxation_adaption(scan, 5e-6)

# stage 2: core response on the reporting grid
A, report = core_stage_solve(adapted, CoreStageConfig(gamma=7e-7, shape=(32, 32), fov=fov))
trace_truth = trace_of(core_operator_apply(truth))
print(f"core stage: {report.iterations} CG iterations; "
      f"trace PSNR {psnr(trace_of(A), trace_truth):.2f} dB")

# stage 3: concentration
rho = deconvolution_stage(A, cfg=DeconvConfig(nu0=1e-7, n_it=10))
print(f"concentration: PSNR {psnr(rho, truth):.2f} dB, SSIM {ssim(rho, truth):.3f}")

for name, grid in [("truth", truth), ("trace", trace_of(A)), ("rho", rho)]:
    save_pgm(OUT / f"quickstart_{name}.pgm", grid)
print(f"images in {OUT}")
