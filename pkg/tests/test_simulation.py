import warnings

import numpy as np
import pytest

from debyempi import (FOV, DomainError, ScalarGrid, add_noise, default_trajectory,
                      forward_debye, forward_langevin, lissajous_trajectory)
from debyempi.phantoms import (Disc, Rectangle, Tube, builtin_phantoms, parse_phantom,
                               rasterize_phantom)
from debyempi.physics import core_operator_apply, mpi_kernel
from debyempi.relaxation import volterra_matrix
from debyempi.simulation import Trajectory, debye_filter, langevin_signal, relaxation_factor


def test_lissajous_start_and_bounds():
    tr = lissajous_trajectory(0.01, 0.008, 1e4, 1.2e4, 1e-6, 500)
    assert np.array_equal(tr.r0, [0.01, 0.008])
    assert np.array_equal(tr.v0, [0.0, 0.0])
    assert np.abs(tr.positions[:, 0]).max() <= 0.01
    assert np.abs(tr.positions[:, 1]).max() <= 0.008
    assert tr.times[0] == pytest.approx(1e-6)


def test_lissajous_velocity_is_analytic_derivative():
    tr = lissajous_trajectory(0.01, 0.01, 2e4, 3e4, 1e-7, 200)
    fd = (tr.positions[2:] - tr.positions[:-2]) / (2 * tr.dt)
    assert np.allclose(fd, tr.velocities[1:-1], rtol=1e-3, atol=1e-3 * np.abs(tr.velocities).max())


def test_default_scan_geometry(params):
    tr = default_trajectory(params)
    assert tr.L == 1632
    assert tr.repetition_time == pytest.approx(652.8e-6, rel=1e-12)
    assert tr.amplitudes == pytest.approx((0.012, 0.012))


def test_lissajous_rejects_nonpositive():
    with pytest.raises(DomainError):
        lissajous_trajectory(0.0, 1.0, 1.0, 1.0, 1.0, 10)


@pytest.fixture
def scan_setup(params):
    tr = default_trajectory(params, L=408, dt=1.6e-6)
    a = tr.amplitudes[0]
    return tr, FOV.symmetric(a, a)


def test_zero_concentration_gives_zero_signal(params, scan_setup):
    tr, fov = scan_setup
    scan = forward_langevin(ScalarGrid(np.zeros((16, 16)), fov), tr, params)
    assert not scan.samples.any()


def test_turning_points_are_silent(params):
    # f_y = 2 f_x: both channels have zero velocity at t = 1 / (2 f_x)
    tr = lissajous_trajectory(0.01, 0.01, 1e3, 2e3, 1e-4 / 2, 20)
    fov = FOV.symmetric(0.01, 0.01)
    rho = rasterize_phantom(builtin_phantoms()["dot"], (16, 16), fov)
    scan = forward_langevin(rho, tr, params)
    k = 9  # t = 10 dt = 1 / (2 f_x)
    assert np.allclose(tr.velocities[k], 0.0, atol=1e-9)
    assert np.abs(scan.samples[k]).max() <= 1e-12 * np.abs(scan.samples).max()


def test_impulse_signal_matches_kernel(params, scan_setup):
    tr, fov = scan_setup
    shape = (16, 16)
    rho = ScalarGrid(np.zeros(shape), fov)
    rho.values[7, 9] = 1.0
    scan = forward_langevin(rho, tr, params)
    xs, ys = fov.cell_centers(shape)
    x0 = np.array([xs[7], ys[9]])
    # at grid nodes the interpolation is exact; compare on a sample that hits a node
    node = np.array([xs[3], ys[12]])
    probe = Trajectory(node[None], np.array([[0.3, -0.7]]), 1.0, node, np.array([0.3, -0.7]))
    s, _ = langevin_signal(core_operator_apply(rho, params=params), probe, params)
    K = mpi_kernel(params.G @ (node - x0), params.H_sat) * params.gradient_scale * rho.cell_area
    w = params.unit_gradient @ np.array([0.3, -0.7])
    expected = params.signal_constant * params.R @ K @ w
    assert np.allclose(s[0], expected, rtol=1e-12, atol=1e-14 * np.abs(expected).max())
    assert scan.calibration == params.signal_constant


def test_trajectory_outside_fov_raises(params):
    tr = lissajous_trajectory(0.02, 0.02, 1e3, 1.1e3, 1e-5, 50)
    rho = ScalarGrid(np.ones((8, 8)), FOV.symmetric(0.01, 0.01))
    with pytest.raises(DomainError):
        forward_langevin(rho, tr, params)


def test_relaxation_factor_values():
    assert relaxation_factor(4e-7, 1e-6) == pytest.approx(0.670320046, abs=1e-9)
    assert relaxation_factor(4e-7, 5e-5) == pytest.approx(0.992031915, abs=1e-9)
    assert relaxation_factor(4e-7, 0.0) == 0.0


def test_debye_constant_is_fixed_point():
    s = np.full((100, 2), 3.5)
    out = debye_filter(s, 0.9, np.array([3.5, 3.5]))
    assert np.allclose(out, 3.5, rtol=1e-15)


def test_debye_matches_dense_volterra(rng):
    L, alpha = 64, 0.83
    s_ad = rng.standard_normal(L)
    s0 = 0.4
    dense = volterra_matrix(alpha, L) @ s_ad + alpha ** np.arange(1, L + 1) * s0
    rec = debye_filter(s_ad[:, None], alpha, np.array([s0]))[:, 0]
    assert np.linalg.norm(rec - dense) <= 1e-12 * np.linalg.norm(dense)


def test_debye_converges_to_langevin_as_tau_shrinks(params, scan_setup, rng):
    tr, fov = scan_setup
    rho = rasterize_phantom(builtin_phantoms()["icecream"], (16, 16), fov)
    scan = forward_langevin(rho, tr, params)
    for tau in (1e-7, 3e-7, 1e-6):
        alpha = float(relaxation_factor(scan.dt, tau))
        deb = forward_debye(scan, tau)
        bound = alpha * (np.abs(deb.s0).max() + 2 * np.abs(scan.samples).max())
        assert np.abs(deb.samples - scan.samples).max() <= bound


def test_debye_shift_commutes_after_transient(rng):
    L, alpha = 400, 0.9
    s = np.sin(2 * np.pi * 7 * np.arange(L) / L)[:, None] + 0.1 * rng.standard_normal((L, 1))
    shift = 37
    a = debye_filter(np.roll(s, shift, axis=0), alpha, s[-shift])
    b = np.roll(debye_filter(s, alpha, s[0]), shift, axis=0)
    # after 5 tau / dt samples the state mismatch has decayed by e^-5
    transient = int(np.ceil(-5 / np.log(alpha))) + shift
    assert np.abs(a[transient:] - b[transient:]).max() <= np.exp(-5) * 2 * np.abs(s).max()
    assert np.abs(a[transient + 200:] - b[transient + 200:]).max() <= 1e-9


def test_forward_debye_rejects_zero_tau(params, scan_setup):
    tr, fov = scan_setup
    scan = forward_langevin(rasterize_phantom(builtin_phantoms()["dot"], (16, 16), fov), tr, params)
    with pytest.raises(DomainError):
        forward_debye(scan, 0.0)


def test_add_noise_snr_and_determinism(params):
    tr = default_trajectory(params)
    a = tr.amplitudes[0]
    rho = rasterize_phantom(builtin_phantoms()["dot"], (16, 16), FOV.symmetric(a, a))
    scan = forward_langevin(rho, tr, params)
    snrs = []
    for seed in range(100):
        noisy = add_noise(scan, 40.0, seed)
        noise = noisy.samples - scan.samples
        snrs.append(10 * np.log10(np.mean(scan.samples ** 2, axis=0) / np.mean(noise ** 2, axis=0)))
    assert abs(np.mean(snrs) - 40.0) < 0.5
    assert np.array_equal(add_noise(scan, 40.0, 3).samples, add_noise(scan, 40.0, 3).samples)
    assert np.array_equal(add_noise(scan, np.inf, 3).samples, scan.samples)
    with pytest.raises(DomainError):
        add_noise(scan.with_samples(np.zeros_like(scan.samples)), 40.0, 0)


def test_rasterize_basics():
    fov = FOV.symmetric(1.0, 1.0)
    assert not rasterize_phantom([], (10, 10), fov).values.any()
    full = rasterize_phantom([Rectangle(-1, 1, -1, 1)], (10, 10), fov)
    assert np.all(full.values == 1.0)
    grid = rasterize_phantom([Disc((0.0, 0.0), 0.5)], (50, 50), fov)
    hx, hy = grid.spacing
    assert grid.values.sum() == pytest.approx(np.pi * 0.25 / (hx * hy), rel=0.02)
    assert grid.values.min() >= 0 and grid.values.max() <= 1


def test_rasterize_clips_with_warning():
    fov = FOV.symmetric(1.0, 1.0)
    with pytest.warns(UserWarning):
        g = rasterize_phantom([Disc((0.9, 0.0), 0.5, 2.0)], (20, 20), fov)
    assert g.values.max() <= 2.0


def test_builtin_phantoms_fit_default_fov(params):
    a = default_trajectory(params).amplitudes[0]
    fov = FOV.symmetric(a, a)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for prims in builtin_phantoms().values():
            assert rasterize_phantom(prims, (32, 32), fov).values.max() > 0.5


def test_parse_phantom():
    prims = parse_phantom("""
        # comment
        disc 0 0 3
        rect -6 -3 -6 6 0.5
        tube 1.4 1.0  0 0  3 3  5 0
    """)
    assert isinstance(prims[0], Disc) and prims[0].radius == pytest.approx(3e-3)
    assert isinstance(prims[1], Rectangle) and prims[1].intensity == 0.5
    assert isinstance(prims[2], Tube) and len(prims[2].points) == 3
    with pytest.raises(ValueError):
        parse_phantom("blob 1 2 3")
