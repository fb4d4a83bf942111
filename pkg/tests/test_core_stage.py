import numpy as np
import pytest

from debyempi import (FOV, ConfigError, CoreStageConfig, DomainError, MatrixFieldGrid,
                      NumericalError, ScalarGrid, add_noise, bilaplacian_apply,
                      core_stage_solve, default_trajectory, forward_debye, forward_langevin,
                      trace_of)
from debyempi.cg import conjugate_gradient
from debyempi.core_stage import CoreProblem, core_problem, laplacian_apply, laplacian_eigenvalues
from debyempi.interpolation import interpolate_matrix_field, interpolation_matrix
from debyempi.phantoms import builtin_phantoms, rasterize_phantom
from scipy.fft import dctn


# ---------------------------------------------------------------- interpolation

@pytest.fixture
def field(rng, small_fov):
    return MatrixFieldGrid(rng.standard_normal((7, 6, 2, 2)), small_fov)


def test_interpolation_exact_at_centers(field):
    xs, ys = field.centers()
    for i, j in [(0, 0), (3, 2), (6, 5)]:
        val = interpolate_matrix_field(field, np.array([xs[i], ys[j]]))
        assert np.allclose(val, field.values[i, j], rtol=0, atol=1e-15)


def test_interpolation_partition_of_unity(rng, small_fov):
    const = MatrixFieldGrid(np.broadcast_to(np.array([[1.0, 2.0], [3.0, 4.0]]), (7, 6, 2, 2)).copy(),
                            small_fov)
    pts = rng.uniform([-6e-3, -5e-3], [6e-3, 5e-3], size=(50, 2))
    vals = interpolate_matrix_field(const, pts)
    assert np.allclose(vals, const.values[0, 0], rtol=1e-14)


def test_interpolation_midpoint_is_mean(field):
    xs, ys = field.centers()
    mid = np.array([(xs[2] + xs[3]) / 2, ys[4]])
    val = interpolate_matrix_field(field, mid)
    assert np.allclose(val, (field.values[2, 4] + field.values[3, 4]) / 2, rtol=1e-13)


def test_interpolation_clamps_with_warning(field):
    with pytest.warns(UserWarning):
        val = interpolate_matrix_field(field, np.array([1.0, 0.0]))
    xs, ys = field.centers()
    inside = interpolate_matrix_field(field, np.array([xs[-1], 0.0]))
    assert np.allclose(val, inside)
    _, outside = interpolation_matrix(np.array([[1.0, 0.0]]), (7, 6), field.fov)
    assert outside == 1


# ------------------------------------------------------------------ Bi-Laplacian

def test_bilaplacian_annihilates_constants_and_affine():
    fov = FOV.symmetric(1.0, 1.0)
    g = ScalarGrid(np.full((9, 8), 3.0), fov)
    assert np.abs(bilaplacian_apply(g).values).max() < 1e-9
    xs, ys = fov.cell_centers((9, 8))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    ramp = ScalarGrid(1.0 + 2.0 * X - 0.5 * Y, fov)
    out = bilaplacian_apply(ramp).values
    assert np.abs(out[2:-2, 2:-2]).max() < 1e-9


def test_bilaplacian_impulse_stencil():
    g = np.zeros((11, 11))
    g[5, 5] = 1.0
    out = bilaplacian_apply(g)
    # 13-point stencil from composing the 5-point Laplacian with itself
    expected = np.zeros((11, 11))
    expected[5, 5] = 20
    for d in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        expected[5 + d[0], 5 + d[1]] = -8
        expected[5 + 2 * d[0], 5 + 2 * d[1]] = 1
    for d in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
        expected[5 + d[0], 5 + d[1]] = 2
    assert np.array_equal(out, expected)


def test_bilaplacian_needs_5x5():
    with pytest.raises(ConfigError):
        bilaplacian_apply(ScalarGrid(np.zeros((4, 6)), FOV.symmetric(1, 1)))


def test_laplacian_is_diagonal_in_dct(rng):
    g = rng.standard_normal((9, 12))
    spacing = (0.3, 0.7)
    direct = dctn(laplacian_apply(g, spacing), norm="ortho")
    spectral = laplacian_eigenvalues(g.shape, spacing) * dctn(g, norm="ortho")
    assert np.allclose(direct, spectral, rtol=1e-12, atol=1e-12)


# ----------------------------------------------------------------------- CG

def test_cg_solves_spd(rng):
    M = rng.standard_normal((30, 30))
    S = M @ M.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    res = conjugate_gradient(lambda x: S @ x, b, tol=1e-12, maxiter=200)
    assert res.converged
    assert np.allclose(res.x, np.linalg.solve(S, b), rtol=1e-9)
    assert not conjugate_gradient(lambda x: S @ x, np.zeros(30)).x.any()


def test_cg_breakdown_raises():
    with pytest.raises(NumericalError):
        conjugate_gradient(lambda x: -x, np.ones(4))


def test_cg_reports_nonconvergence(rng):
    S = np.diag(np.logspace(0, 6, 50))
    res = conjugate_gradient(lambda x: S @ x, np.ones(50), tol=1e-14, maxiter=3)
    assert not res.converged and res.iterations == 3


# ------------------------------------------------------------------ core stage

@pytest.fixture(scope="module")
def small_scan():
    from debyempi import PhysicalParams
    params = PhysicalParams()
    tr = default_trajectory(params, dt=1.6e-6, L=408)
    a = tr.amplitudes[0]
    fov = FOV.symmetric(a, a)
    rho = rasterize_phantom(builtin_phantoms()["icecream"], (16, 16), fov)
    return params, fov, rho, forward_langevin(rho, tr, params)


def test_noiseless_self_consistency(small_scan):
    params, fov, rho, scan = small_scan
    cfg = CoreStageConfig(gamma=0.0, shape=(16, 16), fov=fov, cg_tolerance=1e-6)
    A, report = core_stage_solve(scan, cfg, params)
    prob = core_problem(scan, cfg, params)
    rel = np.linalg.norm(prob.forward(A.values) - prob.y) / np.linalg.norm(prob.y)
    assert report.converged
    assert rel < 1e-6


def test_zero_signal_gives_zero_field(small_scan):
    params, fov, rho, scan = small_scan
    zero = scan.with_samples(np.zeros_like(scan.samples))
    A, report = core_stage_solve(zero, CoreStageConfig(gamma=1e-6, shape=(16, 16), fov=fov), params)
    assert not A.values.any()


def test_requires_langevin_data(small_scan):
    params, fov, rho, scan = small_scan
    with pytest.raises(DomainError):
        core_stage_solve(forward_debye(scan, 5e-6), CoreStageConfig(shape=(16, 16)), params)


def test_config_validation():
    with pytest.raises(ConfigError):
        CoreStageConfig(gamma=-1.0)
    with pytest.raises(ConfigError):
        CoreStageConfig(cg_tolerance=1.0)
    with pytest.raises(ConfigError):
        CoreStageConfig(cg_max_iters=0)


@pytest.fixture(scope="module")
def problem(small_scan):
    params, fov, rho, scan = small_scan
    noisy = add_noise(scan, 40.0, 1)
    return core_problem(noisy, CoreStageConfig(gamma=3e-6, shape=(12, 10), fov=fov), params)


def test_normal_operator_symmetric(problem, rng):
    u = rng.standard_normal(problem.field_shape)
    w = rng.standard_normal(problem.field_shape)
    lhs = np.vdot(problem.normal(u), w)
    rhs = np.vdot(u, problem.normal(w))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_normal_operator_positive(problem, rng):
    for _ in range(5):
        u = rng.standard_normal(problem.field_shape)
        assert np.vdot(u, problem.normal(u)) > 0


def test_gradient_matches_finite_differences(problem, rng):
    A = rng.standard_normal(problem.field_shape) * 1e-3
    D = rng.standard_normal(problem.field_shape)
    step = 1e-6 * np.abs(A).max()
    fd = (problem.energy(A + step * D) - problem.energy(A - step * D)) / (2 * step)
    analytic = np.vdot(problem.gradient(A), D)
    assert abs(fd - analytic) <= 1e-5 * abs(analytic)


def test_energy_monotone_along_cg(problem):
    A, report = problem.solve(tol=1e-8, maxiter=200, track_energy=True)
    trace = np.array(report.energy_trace)
    assert len(trace) > 3
    assert np.all(np.diff(trace) <= 1e-12 * abs(trace[0]))


def test_regularization_strength_monotone(small_scan):
    params, fov, rho, scan = small_scan
    noisy = add_noise(scan, 40.0, 2)
    norms = []
    for gamma in [1e-8, 1e-6, 1e-4, 1e-2]:
        prob = core_problem(noisy, CoreStageConfig(gamma=gamma, shape=(12, 12), fov=fov), params)
        A, _ = prob.solve(tol=1e-10, maxiter=5000)
        norms.append(prob.regularizer(A))
    assert np.all(np.diff(norms) < 0)


def test_trace_reconstruction_is_reasonable(small_scan):
    params, fov, rho, scan = small_scan
    from debyempi import core_operator_apply, psnr
    A, report = core_stage_solve(add_noise(scan, 40.0, 0),
                                 CoreStageConfig(gamma=7e-7, shape=(16, 16), fov=fov), params)
    truth = trace_of(core_operator_apply(rho, params=params))
    assert psnr(trace_of(A), truth) > 30


def test_core_problem_custom_units(small_scan, rng):
    params, fov, rho, scan = small_scan
    y = rng.standard_normal((20, 2))
    pts = rng.uniform(-5e-3, 5e-3, size=(20, 2))
    prob = CoreProblem(y, pts, rng.standard_normal((20, 2)), (6, 6), fov, 0.0)
    assert prob.n_outside == 0
    assert prob.spacing == fov.spacing((6, 6))
