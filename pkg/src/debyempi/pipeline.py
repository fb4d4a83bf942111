"""Experiment runner: simulate, adapt, reconstruct and score parameter sweeps.

Manifests are INI files read with :mod:`configparser`; see ``README.md`` for
the full key list. Metric tables only contain deterministic quantities, so
reruns with the same manifest are byte-identical; wall-clock times go to a
separate ``timings.csv``.
"""

from __future__ import annotations

import configparser
import itertools
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_stage import CoreStageConfig, core_stage_solve
from .deconv import DeconvConfig, deconvolution_stage
from .errors import ConfigError, DebyeMPIError
from .grid import FOV, trace_of
from .io import format_float, save_pgm, write_table
from .metrics import psnr, ssim
from .phantoms import builtin_phantoms, parse_phantom, rasterize_phantom
from .physics import PhysicalParams, core_operator_apply
from .relaxation import relaxation_adaption
from .simulation import (DEFAULT_DRIVE_AMPLITUDE, DEFAULT_DT, DEFAULT_FREQUENCIES, DEFAULT_SAMPLES,
                         DEFAULT_TAU, add_noise, forward_debye, forward_langevin,
                         lissajous_trajectory)

METRIC_COLUMNS = ["phantom", "tau", "gamma", "nu0", "n_it", "psnr_trace", "ssim_trace",
                  "psnr_rho", "ssim_rho", "status"]
SUMMARY_COLUMNS = ["tau", "gamma", "nu0", "n_it", "psnr_trace", "ssim_trace", "psnr_rho",
                   "ssim_rho", "runs"]


def decade_sweep(exponents, include_zero=False):
    """``{i * 10^j : i = 1..9}`` over the given exponents, as exact decimals."""
    vals = [float(f"{i}e{j}") for j in exponents for i in range(1, 10)]
    return ([0.0] if include_zero else []) + vals


def _floats(text):
    text = text.strip()
    if text.startswith("decades"):
        # decades -7 -5 [zero]
        parts = text.split()
        lo, hi = int(parts[1]), int(parts[2])
        return decade_sweep(range(lo, hi + 1), include_zero="zero" in parts[3:])
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


@dataclass
class ExperimentManifest:
    phantoms: list = field(default_factory=lambda: ["dot", "spiral"])
    grid: tuple = (32, 32)
    sim_oversample: int = 1
    seed: int = 0
    snr_db: float = 40.0
    tau_true: float = DEFAULT_TAU
    output_dir: str = "results"
    workers: int = 1
    write_images: bool = True
    amplitude: float = DEFAULT_DRIVE_AMPLITUDE
    frequencies: tuple = DEFAULT_FREQUENCIES
    dt: float = DEFAULT_DT
    samples: int = DEFAULT_SAMPLES
    params: PhysicalParams = field(default_factory=PhysicalParams)
    taus: list = field(default_factory=lambda: [DEFAULT_TAU])
    gammas: list = field(default_factory=lambda: [7e-7])
    nu0s: list = field(default_factory=lambda: [1e-7])
    core: CoreStageConfig = field(default_factory=CoreStageConfig)
    deconv: DeconvConfig = field(default_factory=DeconvConfig)
    base_dir: str = "."

    def __post_init__(self):
        for name in ("phantoms", "taus", "gammas", "nu0s"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if any(t < 0 for t in self.taus):
            raise ConfigError("relaxation times must be nonnegative")
        if self.sim_oversample < 1 or self.workers < 1:
            raise ConfigError("sim_oversample and workers must be at least 1")
        self.grid = tuple(int(g) for g in self.grid)
        for p in self.phantoms:
            if p not in builtin_phantoms() and not self._resolve(p).is_file():
                raise ConfigError(f"phantom {p!r} is neither built in nor an existing file")

    def _resolve(self, p):
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def phantom_primitives(self, name):
        if name in builtin_phantoms():
            return builtin_phantoms()[name]
        try:
            return parse_phantom(self._resolve(name).read_text())
        except ValueError as exc:
            raise ConfigError(f"phantom {name}: {exc}") from None

    def trajectory(self):
        a = self.amplitude / self.params.gradient_scale
        return lissajous_trajectory(a, a, *self.frequencies, self.dt, self.samples)

    def fov(self):
        a = self.amplitude / self.params.gradient_scale
        return FOV.symmetric(a, a)

    @classmethod
    def from_ini(cls, path):
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not cp.read(path):
            raise ConfigError(f"cannot read manifest {path}")
        try:
            return cls._from_parser(cp, Path(path).parent)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    @classmethod
    def from_string(cls, text, base_dir="."):
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.read_string(text)
        try:
            return cls._from_parser(cp, Path(base_dir))
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def _from_parser(cls, cp, base):
        known = {"experiment", "trajectory", "physics", "relaxation", "core", "deconv"}
        extra = set(cp.sections()) - known
        if extra:
            raise ConfigError(f"unknown manifest sections: {sorted(extra)}")
        ex = cp["experiment"] if cp.has_section("experiment") else {}
        tr = cp["trajectory"] if cp.has_section("trajectory") else {}
        ph = cp["physics"] if cp.has_section("physics") else {}
        rx = cp["relaxation"] if cp.has_section("relaxation") else {}
        co = cp["core"] if cp.has_section("core") else {}
        de = cp["deconv"] if cp.has_section("deconv") else {}

        def get(sec, key, conv, default):
            return conv(sec[key]) if key in sec else default

        params = PhysicalParams(
            temperature=get(ph, "temperature", float, 293.0),
            M_sat=get(ph, "saturation_magnetization", float, 4.74e5),
            diameter=get(ph, "diameter", float, 21e-9),
            G=-get(ph, "gradient", float, 1.0) * np.eye(2),
        )
        grid = tuple(int(v) for v in get(ex, "grid", str.split, [32, 32]))
        core = CoreStageConfig(gamma=0.0, shape=grid,
                               cg_max_iters=get(co, "cg_max_iters", int, 15000),
                               cg_tolerance=get(co, "cg_tolerance", float, 1e-6))
        deconv = DeconvConfig(
            n_it=get(de, "n_it", int, 10),
            beta=get(de, "beta", lambda s: tuple(int(b) for b in s.replace(",", " ").split()),
                     (1, 1, 1, 1)),
            cg_max_iters=get(de, "cg_max_iters", int, 10000),
            cg_tolerance=get(de, "cg_tolerance", float, 1e-12),
            pad_pct=get(de, "pad_pct", float, 5.0),
            cut_pct=get(de, "cut_pct", float, 5.0),
            kernel=get(de, "kernel", str, "matrix"),
            denoiser=get(de, "denoiser", str, "tikhonov"),
        )
        return cls(
            phantoms=get(ex, "phantoms", lambda s: s.replace(",", " ").split(), ["dot", "spiral"]),
            grid=grid,
            sim_oversample=get(ex, "sim_oversample", int, 1),
            seed=get(ex, "seed", int, 0),
            snr_db=get(ex, "snr_db", float, 40.0),
            tau_true=get(ex, "tau_true", float, DEFAULT_TAU),
            output_dir=str(base / get(ex, "output_dir", str, "results")),
            workers=get(ex, "workers", int, 1),
            write_images=get(ex, "write_images", lambda s: s.strip().lower() in ("1", "yes", "true", "on"), True),
            amplitude=get(tr, "amplitude", float, DEFAULT_DRIVE_AMPLITUDE),
            frequencies=(get(tr, "f_x", float, DEFAULT_FREQUENCIES[0]),
                         get(tr, "f_y", float, DEFAULT_FREQUENCIES[1])),
            dt=get(tr, "dt", float, DEFAULT_DT),
            samples=get(tr, "samples", int, DEFAULT_SAMPLES),
            params=params,
            taus=get(rx, "tau", _floats, [DEFAULT_TAU]),
            gammas=get(co, "gamma", _floats, [7e-7]),
            nu0s=get(de, "nu0", _floats, [1e-7]),
            core=core,
            deconv=deconv,
            base_dir=str(base),
        )


def simulate_phantom(manifest, name, index):
    """Ground truth on the reporting grid and a noisy Debye scan."""
    fov = manifest.fov()
    prims = manifest.phantom_primitives(name)
    rho = rasterize_phantom(prims, manifest.grid, fov)
    if manifest.sim_oversample > 1:
        fine_shape = tuple(manifest.sim_oversample * g for g in manifest.grid)
        rho_sim = rasterize_phantom(prims, fine_shape, fov)
    else:
        rho_sim = rho
    scan = forward_langevin(rho_sim, manifest.trajectory(), manifest.params)
    if manifest.tau_true > 0:
        scan = forward_debye(scan, manifest.tau_true)
    scan = add_noise(scan, manifest.snr_db, manifest.seed + index)
    trace_gt = trace_of(core_operator_apply(rho, params=manifest.params))
    return rho, trace_gt, scan


def _tag(x):
    return format_float(x).replace("+", "")


def _run_task(manifest, name, index, tau, gamma):
    """One phantom and (tau, gamma) pair, all nu0 values. Never raises."""
    rows, timings, images = [], [], []
    base = dict(phantom=name, tau=tau, gamma=gamma, n_it=manifest.deconv.n_it)
    try:
        rho, trace_gt, scan = simulate_phantom(manifest, name, index)
        t0 = time.perf_counter()
        adapted = relaxation_adaption(scan, tau)
        cfg = CoreStageConfig(gamma=gamma, shape=manifest.grid, fov=manifest.fov(),
                              cg_max_iters=manifest.core.cg_max_iters,
                              cg_tolerance=manifest.core.cg_tolerance)
        A, report = core_stage_solve(adapted, cfg, manifest.params)
        t_core = time.perf_counter() - t0
        tr = trace_of(A)
        m_trace = dict(psnr_trace=psnr(tr, trace_gt), ssim_trace=ssim(tr, trace_gt))
        status_core = "ok" if report.converged else "core-not-converged"
    except DebyeMPIError as exc:
        for nu0 in manifest.nu0s:
            rows.append(dict(base, nu0=nu0, psnr_trace=math.nan, ssim_trace=math.nan,
                             psnr_rho=math.nan, ssim_rho=math.nan,
                             status=f"error: {type(exc).__name__}"))
        return rows, timings, images
    images.append((f"{name}_tau{_tag(tau)}_gamma{_tag(gamma)}_trace", tr))
    for nu0 in manifest.nu0s:
        row = dict(base, nu0=nu0, **m_trace)
        t0 = time.perf_counter()
        try:
            cfg = DeconvConfig(**{**manifest.deconv.__dict__, "nu0": nu0})
            out = deconvolution_stage(A, manifest.params, cfg)
            row.update(psnr_rho=psnr(out, rho), ssim_rho=ssim(out, rho), status=status_core)
            images.append((f"{name}_tau{_tag(tau)}_gamma{_tag(gamma)}_nu{_tag(nu0)}_rho", out))
        except DebyeMPIError as exc:
            row.update(psnr_rho=math.nan, ssim_rho=math.nan, status=f"error: {type(exc).__name__}")
        rows.append(row)
        timings.append(dict(base, nu0=nu0, t_core=t_core, t_deconv=time.perf_counter() - t0))
    return rows, timings, images


def _run_task_star(args):
    try:
        return _run_task(*args)
    except Exception:  # keep the sweep going, but surface the failure
        manifest, name, index, tau, gamma = args
        msg = traceback.format_exc().strip().splitlines()[-1]
        rows = [dict(phantom=name, tau=tau, gamma=gamma, nu0=nu0, n_it=manifest.deconv.n_it,
                     psnr_trace=math.nan, ssim_trace=math.nan, psnr_rho=math.nan,
                     ssim_rho=math.nan, status=f"error: {msg}") for nu0 in manifest.nu0s]
        return rows, [], []


@dataclass
class SweepResult:
    rows: list
    summary: list
    argmax: dict
    timings: list
    images: list = field(default_factory=list)


def _mean(values):
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan
    return float(np.mean(vals))


def summarize(rows):
    """Arithmetic mean over phantoms for every (tau, gamma, nu0) combination."""
    groups = {}
    for r in rows:
        groups.setdefault((r["tau"], r["gamma"], r["nu0"], r["n_it"]), []).append(r)
    summary = []
    for (tau, gamma, nu0, n_it), grp in sorted(groups.items()):
        entry = dict(tau=tau, gamma=gamma, nu0=nu0, n_it=n_it, runs=len(grp))
        for m in ("psnr_trace", "ssim_trace", "psnr_rho", "ssim_rho"):
            entry[m] = _mean([g[m] for g in grp])
        summary.append(entry)
    return summary


def argmax_rows(summary):
    """Best combination per metric; the smallest parameters win exact ties."""
    best = {}
    for m in ("psnr_trace", "ssim_trace", "psnr_rho", "ssim_rho"):
        cands = [s for s in summary if not math.isnan(s[m])]
        if cands:
            top = max(s[m] for s in cands)
            best[m] = min((s for s in cands if s[m] == top),
                          key=lambda s: (s["tau"], s["gamma"], s["nu0"]))
    return best


def run_pipeline(manifest, write=True):
    """Run every (phantom, tau, gamma, nu0) combination of the manifest.

    Stage failures are recorded in the ``status`` column and the sweep
    continues. With ``write`` the metric table, a summary with argmax rows,
    timings and PGM images are written to ``manifest.output_dir``.
    """
    tasks = [(manifest, name, i, tau, gamma)
             for i, name in enumerate(manifest.phantoms)
             for tau, gamma in itertools.product(manifest.taus, manifest.gammas)]
    if manifest.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(manifest.workers) as pool:
            results = list(pool.map(_run_task_star, tasks))
    else:
        results = [_run_task_star(t) for t in tasks]
    rows = [r for res in results for r in res[0]]
    timings = [t for res in results for t in res[1]]
    images = [im for res in results for im in res[2]]
    summary = summarize(rows)
    result = SweepResult(rows, summary, argmax_rows(summary), timings, images)
    if write:
        write_outputs(result, manifest)
    return result


def write_outputs(result, manifest):
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "metrics.csv", METRIC_COLUMNS, result.rows)
    argmax = [dict(s, metric=m) for m, s in result.argmax.items()]
    write_table(out / "summary.csv", SUMMARY_COLUMNS, result.summary)
    write_table(out / "argmax.csv", ["metric"] + SUMMARY_COLUMNS, argmax)
    write_table(out / "timings.csv", ["phantom", "tau", "gamma", "nu0", "n_it", "t_core", "t_deconv"],
                result.timings)
    if manifest.write_images:
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        for name, grid in result.images:
            save_pgm(img_dir / f"{name}.pgm", grid)
