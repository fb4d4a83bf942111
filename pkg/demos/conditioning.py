"""How hard is undoing the relaxation, and what does a wrong tau do?

Prints the relaxation factor, the condition number and the noise gain of the
exact inverse over a range of relaxation times, then shows the trace that a
too small, a correct and a too large tau produce.
"""

import numpy as np

from debyempi import (FOV, CoreStageConfig, add_noise, condition_number, core_operator_apply,
                      core_stage_solve, default_trajectory, forward_debye, forward_langevin, psnr,
                      relaxation_adaption, trace_of)
from debyempi.phantoms import builtin_phantoms, rasterize_phantom
from debyempi.relaxation import noise_gain
from debyempi.simulation import relaxation_factor

dt = 4e-7
trajectory = default_trajectory()
T = trajectory.repetition_time

print(" tau [s]    alpha    kappa   noise gain")
for tau in (1e-7, 1e-6, 5e-6, 1e-5, 5e-5):
    alpha = float(relaxation_factor(dt, tau))
    print(f"{tau:8.0e}  {alpha:.4f}  {condition_number(alpha, T, tau):7.1f}  {noise_gain(alpha):9.1f}")

a = trajectory.amplitudes[0]
fov = FOV.symmetric(a, a)
truth = rasterize_phantom(builtin_phantoms()["dot"], (32, 32), fov)
fine = rasterize_phantom(builtin_phantoms()["dot"], (64, 64), fov)
scan = add_noise(forward_debye(forward_langevin(fine, trajectory), 5e-6), 40.0, seed=1)
trace_truth = trace_of(core_operator_apply(truth)).values


def total_variation(x):
    return np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum()


print("\nassumed tau  trace PSNR  TV(trace)/TV(truth)")
for tau in (0.0, 1e-6, 5e-6, 2e-5, 5e-5):
    A, _ = core_stage_solve(relaxation_adaption(scan, tau),
                            CoreStageConfig(gamma=7e-7, shape=(32, 32), fov=fov))
    tr = trace_of(A)
    ratio = total_variation(tr.values) / total_variation(trace_truth)
    print(f"{tau:10.0e}  {psnr(tr.values, trace_truth):9.2f}  {ratio:8.2f}")
print("below 1: blurred and shifted along the trajectory; above 1: oscillating overshoot")
