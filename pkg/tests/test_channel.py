import numpy as np
import pytest

from semflow.channel import Channel1D, profile_difference, solve_channel


@pytest.fixture(scope="module")
def ktau180():
    return solve_channel("ktau", re_tau=180.0)


def test_derivative_exact_for_polynomials():
    ch = Channel1D.build(5, 6, 1.3)
    np.testing.assert_allclose(ch.derivative(ch.y ** 6), 6 * ch.y ** 5, atol=1e-10)
    assert abs(ch.integrate(ch.y ** 3) - 0.25) < 1e-13


def test_stiffness_symmetric_with_constant_null_space(rng):
    ch = Channel1D.build(4, 5, 1.2)
    K = ch.stiffness(1 + rng.random(ch.y.size))
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    assert np.abs(K @ np.ones(ch.y.size)).max() < 1e-10


def test_converged_and_wall_values(ktau180):
    s = ktau180
    assert s.residual < 1e-8
    assert s.u[0] == 0 and s.k[0] == 0 and s.tau[0] == 0
    assert np.all(s.k >= 0) and np.all(s.nu_t >= 0)


def test_total_shear_balances_pressure_gradient(ktau180):
    # steady momentum: (nu + nu_t) dU/dy = u_tau^2 (1 - y) with u_tau = 1
    s = ktau180
    ch = Channel1D.build(*_grid(s))
    dudy = ch.derivative(s.u)
    total = (s.nu + s.nu_t) * dudy
    interior = (s.y > 0.02) & (s.y < 0.95)
    np.testing.assert_allclose(total[interior], 1 - s.y[interior], atol=2e-3)


def _grid(s):
    # recover the default k-tau grid parameters used by solve_channel
    from semflow.channel import DEFAULT_GRIDS
    return DEFAULT_GRIDS["ktau"]


def test_viscous_sublayer(ktau180):
    s = ktau180
    yp = s.y_plus
    sel = (yp > 0) & (yp < 1.0)
    np.testing.assert_allclose(s.u[sel], yp[sel], rtol=2e-2)


def test_profile_difference_self_is_zero(ktau180):
    assert profile_difference(ktau180, ktau180) == 0.0
