"""Sweep the assumed relaxation time and find the best reconstruction.

Runs the manifest in ``sweep.ini`` (a few minutes on one core), prints the
mean concentration PSNR per tau and the argmax. Pass a different manifest path
as the first argument to change the setup, e.g. a smaller grid for a quick look.
"""

import sys
from pathlib import Path

from debyempi import ExperimentManifest, run_pipeline

path = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "sweep.ini"
manifest = ExperimentManifest.from_ini(path)
print(f"{len(manifest.phantoms)} phantoms x {len(manifest.taus)} tau values, "
      f"true tau {manifest.tau_true:g}")
result = run_pipeline(manifest)

print("\n   tau      PSNR rho  SSIM rho  PSNR trace")
for row in result.summary:
    bar = "#" * max(0, int(row["psnr_rho"]))
    print(f"{row['tau']:8.1e}  {row['psnr_rho']:8.2f}  {row['ssim_rho']:8.3f}  {row['psnr_trace']:8.2f}  {bar}")
best = result.argmax["psnr_rho"]
print(f"\nbest tau {best['tau']:g} with mean PSNR {best['psnr_rho']:.2f} dB")
print(f"tables and images in {manifest.output_dir}")
