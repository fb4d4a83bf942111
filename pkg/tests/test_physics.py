import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from debyempi import (DomainError, MatrixFieldGrid, PhysicalParams, ScalarGrid,
                      core_operator_adjoint, core_operator_apply, langevin,
                      langevin_derivative, mpi_kernel, trace_kernel)
from debyempi.errors import ConfigError
from debyempi.physics import convolve_table, kernel_eigenvalues, kernel_table

# 40-digit reference values of coth(x) - 1/x and 1/x^2 - csch(x)^2 (mpmath)
REFERENCE = [
    (1e-3, 0.0003333333111111132275130158730372508127617, 0.33333326666667724867576719595959594329),
    (0.04, 0.01333191132779601830156681041769404841139, 0.3332266937505468691299075297468513163523),
    (0.06, 0.01999520164512204393189428665099792398155, 0.3330934704071027776447765469218609512731),
    (0.5, 0.1639534137386528487700040102180231170938, 0.3173056231688307242183459091340015884734),
    (2.0, 0.5373147207275480958778097647678207116624, 0.1739781701619289007466269874777777169144),
    (7.5, 0.8666672784714948228348706022417751434484, 0.01777655416774716029361470812124068880171),
]


@pytest.mark.parametrize("x,L,dL", REFERENCE)
def test_langevin_matches_high_precision(x, L, dL):
    assert langevin(x) == pytest.approx(L, rel=1e-13)
    assert langevin_derivative(x) == pytest.approx(dL, rel=1e-12)


def test_langevin_limits():
    assert langevin(0.0) == 0.0
    assert langevin_derivative(0.0) == pytest.approx(1 / 3, abs=1e-16)
    assert 0.9899 <= langevin(100.0) <= 0.9901
    assert 0.33330 <= langevin(1e-4) / 1e-4 <= 0.33337
    assert langevin_derivative(50.0) < 1e-3


def test_langevin_derivative_matches_central_difference():
    h = 1e-5
    fd = (langevin(1 + h) - langevin(1 - h)) / (2 * h)
    assert abs(fd - langevin_derivative(1.0)) < 1e-6


@pytest.mark.parametrize("bad", [-1.0, np.nan])
def test_langevin_rejects_bad_input(bad):
    with pytest.raises(DomainError):
        langevin(bad)
    with pytest.raises(DomainError):
        langevin_derivative(bad)


def test_langevin_vectorized_range():
    x = np.linspace(0, 40, 4001)
    L, dL = langevin(x), langevin_derivative(x)
    assert np.all((L >= 0) & (L < 1))
    assert np.all((dL > 0) & (dL <= 1 / 3))
    assert np.all(np.diff(L) > 0)


def test_kernel_at_origin():
    assert np.array_equal(mpi_kernel(np.zeros(2)), np.eye(2) / 3)
    assert trace_kernel(np.zeros(2)) == pytest.approx(2 / 3, abs=1e-16)


def test_kernel_even_and_axis_form():
    y = np.array([0.7, -0.2])
    assert np.allclose(mpi_kernel(y), mpi_kernel(-y), rtol=0, atol=0)
    t = 1.3
    K = mpi_kernel(np.array([t, 0.0]))
    assert np.allclose(K, np.diag([langevin_derivative(t), langevin(t) / t]), rtol=1e-14, atol=0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30), st.floats(0.05, 20))
def test_kernel_properties(a, b, h):
    y = np.array([a, b])
    K = mpi_kernel(y, h)
    assert np.array_equal(K, K.T)
    assert np.allclose(K, mpi_kernel(y / h) / h, rtol=1e-15, atol=0)
    ev = np.linalg.eigvalsh(K * h)
    assert np.all(ev > 0) and np.all(ev <= 1 / 3 + 1e-15)
    r = np.hypot(a, b) / h
    expected = np.sort(kernel_eigenvalues(r))
    assert np.allclose(ev, expected, rtol=1e-12, atol=1e-15)
    assert trace_kernel(y, h) == pytest.approx(np.trace(K), rel=1e-14)


def test_trace_kernel_decreasing_on_ray():
    r = np.linspace(0, 10, 2001)
    kappa = trace_kernel(np.stack([r, np.zeros_like(r)], axis=-1))
    assert np.all(kappa > 0)
    assert np.all(np.diff(kappa) < 0)


def test_kernel_rejects_nonpositive_h():
    with pytest.raises(DomainError):
        mpi_kernel(np.ones(2), 0.0)
    with pytest.raises(DomainError):
        trace_kernel(np.ones(2), -1.0)


def test_physical_constants(params):
    assert params.H_sat == pytest.approx(
        params.k_B * params.temperature / (params.M_sat * np.pi / 6 * params.diameter ** 3), rel=1e-15)
    assert params.H_sat == pytest.approx(1.76e-3, rel=5e-3)
    assert params.spatial_resolution == pytest.approx(params.H_sat, rel=1e-15)
    with pytest.raises(ConfigError):
        PhysicalParams(G=np.zeros((2, 2)))
    with pytest.raises(DomainError):
        PhysicalParams(temperature=-1.0)


def test_impulse_response_matches_direct_kernel(params, small_fov):
    shape = (9, 7)
    rho = ScalarGrid(np.zeros(shape), small_fov)
    rho.values[3, 2] = 1.0
    A = core_operator_apply(rho, params=params)
    xs, ys = small_fov.cell_centers(shape)
    area = rho.cell_area
    for k, l in [(0, 0), (3, 2), (8, 6), (5, 1)]:
        d = np.array([xs[k] - xs[3], ys[l] - ys[2]])
        expected = mpi_kernel(params.G @ d, params.H_sat) * params.gradient_scale * area
        assert np.allclose(A.values[k, l], expected, rtol=1e-12, atol=1e-14 * np.abs(expected).max())


def test_fft_convolution_matches_direct_sum(params, small_fov, rng):
    rho = ScalarGrid(rng.random((8, 8)), small_fov)
    fast = core_operator_apply(rho, params=params).values
    slow = core_operator_apply(rho, params=params, method="direct").values
    assert np.linalg.norm(fast - slow) <= 1e-10 * np.linalg.norm(slow)


def test_core_operator_linear(params, small_fov, rng):
    a = ScalarGrid(rng.random((10, 12)), small_fov)
    b = ScalarGrid(rng.random((10, 12)), small_fov)
    lhs = core_operator_apply(ScalarGrid(a.values + b.values, small_fov), params=params).values
    rhs = core_operator_apply(a, params=params).values + core_operator_apply(b, params=params).values
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)
    zero = core_operator_apply(ScalarGrid(np.zeros((10, 12)), small_fov), params=params)
    assert not zero.values.any()


def test_core_operator_bound(params, small_fov, rng):
    rho = ScalarGrid(rng.random((10, 12)), small_fov)
    A = core_operator_apply(rho, params=params)
    bound = np.abs(rho.values).sum() * np.abs(kernel_table(rho.shape, rho.spacing, params)).max()
    assert np.abs(A.values).max() <= bound


def test_core_operator_adjoint(params, small_fov, rng):
    rho = ScalarGrid(rng.standard_normal((11, 9)), small_fov)
    A = MatrixFieldGrid(rng.standard_normal((11, 9, 2, 2)), small_fov)
    lhs = np.vdot(core_operator_apply(rho, params=params).values, A.values)
    rhs = np.vdot(rho.values, core_operator_adjoint(A, params=params).values)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_convolve_table_unknown_method(params, small_fov):
    table = kernel_table((4, 4), small_fov.spacing((4, 4)), params)
    with pytest.raises(ConfigError):
        convolve_table(np.zeros((4, 4)), table, method="magic")
