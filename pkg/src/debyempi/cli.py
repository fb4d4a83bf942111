"""Debye-corrected MPI simulation and reconstruction from the command line.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import io
from .core_stage import CoreStageConfig, core_stage_solve
from .deconv import DeconvConfig, DeconvReport, deconvolution_stage
from .errors import ConditioningError, ConfigError, DomainError, NumericalError
from .grid import FOV, trace_of
from .metrics import psnr, ssim
from .phantoms import builtin_phantoms, parse_phantom, rasterize_phantom
from .physics import PhysicalParams
from .pipeline import ExperimentManifest, run_pipeline
from .relaxation import RelaxationParams, relaxation_adaption
from .simulation import (DEFAULT_DRIVE_AMPLITUDE, DEFAULT_TAU, add_noise, forward_debye,
                         forward_langevin, default_trajectory)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _beta(text):
    try:
        return tuple(int(b) for b in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("beta must look like 1,1,1,1") from None


def _add_tau_flags(p, default=None, required=False):
    p.add_argument("--tau", type=float, default=default, required=required,
                   help="relaxation time in s for every channel, 0 to skip")
    p.add_argument("--tau-x", type=float, help="override tau of the x channel")
    p.add_argument("--tau-y", type=float, help="override tau of the y channel")


def _relaxation(args, scan):
    tau = np.full(scan.n, args.tau)
    for i, override in enumerate((args.tau_x, args.tau_y)[:scan.n]):
        if override is not None:
            tau[i] = override
    return RelaxationParams(tau, scan.dt)


def _add_core_flags(p):
    p.add_argument("--gamma", type=float, default=7e-7)
    p.add_argument("--cg-max-iters", type=int, default=15000)
    p.add_argument("--cg-tol", type=float, default=1e-6)
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=(32, 32))


def _add_deconv_flags(p):
    p.add_argument("--nu0", type=float, default=1e-7)
    p.add_argument("--n-it", type=int, default=10)
    p.add_argument("--beta", type=_beta, default=(1, 1, 1, 1), help="weights 11,12,21,22")
    p.add_argument("--pad-pct", type=float, default=5.0)
    p.add_argument("--cut-pct", type=float, default=5.0)
    p.add_argument("--denoiser", choices=("tikhonov", "identity"), default="tikhonov")
    p.add_argument("--deconv-cg-max-iters", type=int, default=10000)
    p.add_argument("--deconv-cg-tol", type=float, default=1e-12)


def build_parser():
    parser = argparse.ArgumentParser(prog="debyempi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a noisy Debye scan of a phantom")
    p.add_argument("--phantom", default="dot", help=f"built-in ({', '.join(builtin_phantoms())}) or file")
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=(64, 64))
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="0 for a Langevin scan")
    p.add_argument("--snr-db", type=float, default=40.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write a CSV debug export")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("adapt", help="undo Debye relaxation of a scan")
    p.add_argument("scan")
    _add_tau_flags(p, required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("core", help="reconstruct the core response from a Langevin scan")
    p.add_argument("scan")
    _add_core_flags(p)
    p.add_argument("--image", help="write the trace as PGM")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("deconv", help="recover the concentration from a core response")
    p.add_argument("field")
    _add_deconv_flags(p)
    p.add_argument("--image", help="write the result as PGM")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("pipeline", help="adapt, core and deconv on one scan, or a manifest")
    p.add_argument("scan", nargs="?")
    p.add_argument("--manifest")
    _add_tau_flags(p, default=DEFAULT_TAU)
    _add_core_flags(p)
    _add_deconv_flags(p)
    p.add_argument("--image")
    p.add_argument("-o", "--output")

    p = sub.add_parser("sweep", help="run a manifest sweep and print the argmax rows")
    p.add_argument("--manifest", required=True)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("metrics", help="PSNR and SSIM of a grid against a reference grid")
    p.add_argument("image")
    p.add_argument("reference")
    return parser


def _fov(params):
    a = DEFAULT_DRIVE_AMPLITUDE / params.gradient_scale
    return FOV.symmetric(a, a)


def _cmd_simulate(args, params):
    if args.phantom in builtin_phantoms():
        prims = builtin_phantoms()[args.phantom]
    else:
        try:
            with open(args.phantom) as fh:
                prims = parse_phantom(fh.read())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"phantom {args.phantom}: {exc}") from None
    rho = rasterize_phantom(prims, tuple(args.grid), _fov(params))
    scan = forward_langevin(rho, default_trajectory(params), params)
    if args.tau > 0:
        scan = forward_debye(scan, args.tau)
    scan = add_noise(scan, args.snr_db, args.seed)
    io.save_scan(args.output, scan)
    if args.csv:
        io.scan_to_csv(scan, args.csv)
    print(f"wrote {args.output}: L={scan.L} model={scan.model}")


def _core_cfg(args, params):
    return CoreStageConfig(gamma=args.gamma, shape=tuple(args.grid), fov=_fov(params),
                           cg_max_iters=args.cg_max_iters, cg_tolerance=args.cg_tol)


def _deconv_cfg(args):
    return DeconvConfig(nu0=args.nu0, n_it=args.n_it, beta=args.beta, pad_pct=args.pad_pct,
                        cut_pct=args.cut_pct, denoiser=args.denoiser,
                        cg_max_iters=args.deconv_cg_max_iters, cg_tolerance=args.deconv_cg_tol)


def _core(scan, args, params):
    A, report = core_stage_solve(scan, _core_cfg(args, params), params)
    status = "converged" if report.converged else "NOT converged"
    print(f"core stage: {report.iterations} CG iterations, residual {report.residual:.2e} ({status})")
    return A


def _cmd_adapt(args, params):
    scan = io.load_scan(args.scan)
    out = relaxation_adaption(scan, _relaxation(args, scan))
    io.save_scan(args.output, out)
    print(f"wrote {args.output}")


def _cmd_core(args, params):
    A = _core(io.load_scan(args.scan), args, params)
    io.save_grid(args.output, A)
    if args.image:
        io.save_pgm(args.image, trace_of(A))
    print(f"wrote {args.output}")


def _cmd_deconv(args, params):
    report = DeconvReport()
    rho = deconvolution_stage(io.load_field(args.field), params, _deconv_cfg(args), report=report)
    print(f"deconvolution: final sigma {report.sigmas[-1]:.3e}")
    io.save_grid(args.output, rho)
    if args.image:
        io.save_pgm(args.image, rho)
    print(f"wrote {args.output}")


def _print_argmax(result):
    for metric, row in result.argmax.items():
        print(f"{metric:>10}: {row[metric]:.4f} at tau={row['tau']:g} gamma={row['gamma']:g} "
              f"nu0={row['nu0']:g}")


def _cmd_pipeline(args, params):
    if args.manifest:
        result = run_pipeline(ExperimentManifest.from_ini(args.manifest))
        _print_argmax(result)
        return
    if not args.scan or not args.output:
        raise ConfigError("pipeline needs a scan and -o, or --manifest")
    scan = io.load_scan(args.scan)
    scan = relaxation_adaption(scan, _relaxation(args, scan))
    rho = deconvolution_stage(_core(scan, args, params), params, _deconv_cfg(args))
    io.save_grid(args.output, rho)
    if args.image:
        io.save_pgm(args.image, rho)
    print(f"wrote {args.output}")


def _cmd_sweep(args, params):
    manifest = ExperimentManifest.from_ini(args.manifest)
    if args.workers:
        manifest.workers = args.workers
    result = run_pipeline(manifest)
    failed = sum(1 for r in result.rows if r["status"].startswith("error"))
    print(f"{len(result.rows)} runs, {failed} failed; tables in {manifest.output_dir}")
    _print_argmax(result)


def _cmd_metrics(args, params):
    x, ref = io.load_scalar(args.image), io.load_scalar(args.reference)
    print(f"psnr {psnr(x, ref):.4f}")
    print(f"ssim {ssim(x, ref):.6f}")


COMMANDS = {"simulate": _cmd_simulate, "adapt": _cmd_adapt, "core": _cmd_core,
            "deconv": _cmd_deconv, "pipeline": _cmd_pipeline, "sweep": _cmd_sweep,
            "metrics": _cmd_metrics}


def main(argv=None):
    args = build_parser().parse_args(argv)
    params = PhysicalParams()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args, params)
    except (ConditioningError, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
