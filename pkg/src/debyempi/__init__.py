"""Three-stage MPI reconstruction with Debye relaxation correction.

Stages: relaxation adaption of the receive signal, core-response recovery
from trajectory samples, and multi-kernel deconvolution of the particle
concentration.
"""

from .core_stage import CoreStageConfig, bilaplacian_apply, core_stage_solve
from .deconv import (DeconvConfig, deconvolution_stage, default_denoiser, hqs_deconvolve,
                     identity_denoiser, noise_estimator, pad_and_cut)
from .errors import ConditioningError, ConfigError, DebyeMPIError, DomainError, NumericalError
from .grid import FOV, MatrixFieldGrid, ScalarGrid, trace_of
from .metrics import psnr, ssim
from .physics import (PhysicalParams, core_operator_adjoint, core_operator_apply, langevin,
                      langevin_derivative, mpi_kernel, trace_kernel)
from .pipeline import ExperimentManifest, run_pipeline
from .relaxation import RelaxationParams, condition_number, relaxation_adaption
from .simulation import (ScanRecord, Trajectory, add_noise, forward_debye, forward_langevin,
                         lissajous_trajectory, default_trajectory)

__version__ = "0.1.0"
