import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semflow import turbulence as turb
from semflow.errors import DomainError

C = turb.SstConstants()
DD = turb.DdesConstants()


def _state(k, tau, gk=(0.0, 0.0), gt=(0.0, 0.0), S=0.0, Om=0.0, d=1.0, nu=1e-5):
    a = np.atleast_1d
    return turb.LocalClosureState(a(k).astype(float), a(tau).astype(float),
                                  np.atleast_2d(gk).astype(float), np.atleast_2d(gt).astype(float),
                                  a(S).astype(float), a(Om).astype(float), a(d).astype(float), nu)


def _random_states(rng, n):
    k = 10 ** rng.uniform(-6, 0, n)
    tau = 10 ** rng.uniform(-4, 1, n)
    gk = rng.standard_normal((n, 2))
    gt = rng.standard_normal((n, 2))
    S = 10 ** rng.uniform(-3, 2, n)
    d = 10 ** rng.uniform(-4, 0, n)
    return k, tau, gk, gt, S, d


def _omega_blending(k, w, gk, gw, d, nu):
    """Independent omega-form F1, F2, arg1, arg2 written from the standard SST model."""
    cd = np.maximum(2 * C.sigma_w2 * np.sum(gk * gw, axis=-1) / w, 1e-10)
    arg1 = np.minimum(np.maximum(np.sqrt(k) / (C.beta_star * d * w), 500 * nu / (d ** 2 * w)),
                      4 * C.sigma_w2 * k / (cd * d ** 2))
    arg2 = np.maximum(2 * np.sqrt(k) / (C.beta_star * d * w), 500 * nu / (d ** 2 * w))
    return np.tanh(arg1 ** 4), np.tanh(arg2 ** 2), arg1, arg2


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------

def test_constant_tables_exact():
    assert (C.alpha1, C.beta1, C.sigma_k1, C.sigma_w1) == (5 / 9, 0.075, 0.85, 0.5)
    assert (C.alpha2, C.beta2, C.sigma_k2, C.sigma_w2) == (0.44, 0.0828, 1.0, 0.856)
    assert (C.c_mu, C.beta_star, C.kappa, C.a1) == (0.09, 0.09, 0.41, 0.31)
    assert (DD.c_des1, DD.c_des2, DD.c_d1, DD.c_d2) == (0.78, 0.61, 20.0, 3.0)


def test_blend_constants_limits():
    assert turb.blend_constants(1.0) == pytest.approx((5 / 9, 0.075, 0.85, 0.5, 0.78), abs=0)
    assert turb.blend_constants(0.0) == pytest.approx((0.44, 0.0828, 1.0, 0.856, 0.61), abs=0)
    mid = turb.blend_constants(0.5)
    sets = zip(turb.blend_constants(1.0), turb.blend_constants(0.0))
    for m, (a, b) in zip(mid, sets):
        assert abs(m - 0.5 * (a + b)) < 1e-15


def test_blend_constants_rejects_out_of_range():
    with pytest.raises(DomainError):
        turb.blend_constants(1.5)


# --------------------------------------------------------------------------
# blending functions and eddy viscosity
# --------------------------------------------------------------------------

def test_freestream_limit():
    F1, F2, a1, a2, _ = turb.blending_state(_state(1e-3, 1.0, d=1e6))
    assert F1[0] < 1e-20 and F2[0] < 1e-10
    assert a1[0] < 1e-5 and a2[0] < 1e-5


def test_cross_diffusion_floor():
    # grad k . grad tau > 0 means grad k . grad omega < 0: floor engaged
    *_, cd = turb.blending_state(_state(1.0, 1.0, gk=(1.0, 0.0), gt=(2.0, 0.0)))
    assert cd[0] == 1e-10


def test_blending_matches_omega_form(rng):
    k, tau, gk, gt, S, d = _random_states(rng, 1000)
    F1, F2, a1, a2, _ = turb.blending_state(_state(k, tau, gk, gt, S, 0 * S, d))
    G1, G2, b1, b2 = _omega_blending(k, 1 / tau, gk, -gt / tau[:, None] ** 2, d, 1e-5)
    for x, y in ((F1, G1), (F2, G2), (a1, b1), (a2, b2)):
        assert _rel(x, y) < 1e-12


def test_blending_rejects_nonpositive_distance():
    with pytest.raises(DomainError):
        turb.blending_state(_state(1.0, 1.0, d=0.0))


def test_eddy_viscosity_unlimited_and_limited():
    s = _state(2.0, 3.0, S=0.0)
    assert turb.eddy_viscosity(s, np.ones(1))[0] == pytest.approx(6.0, rel=1e-15)
    s = _state(2.0, 3.0, S=1e4)
    assert turb.eddy_viscosity(s, np.full(1, 0.5))[0] == pytest.approx(0.31 * 2 / (0.5 * 1e4),
                                                                       rel=1e-14)


def test_eddy_viscosity_matches_omega_form(rng):
    k, tau, gk, gt, S, d = _random_states(rng, 1000)
    F2 = rng.uniform(0, 1, 1000)
    mt = turb.eddy_viscosity(_state(k, tau, gk, gt, S, S, d), F2)
    ref = C.a1 * k / np.maximum(C.a1 / tau, F2 * S)
    assert _rel(mt, ref) < 1e-14


# --------------------------------------------------------------------------
# sources
# --------------------------------------------------------------------------

def test_k_destruction_only():
    sk, _ = turb.ktau_sources(_state(1.0, 2.0))
    assert sk[0] == pytest.approx(-0.045, abs=1e-15)


def test_production_limiter():
    k, tau = 1.0, 0.5
    mu_t = 100 * C.c_mu * k / tau
    assert turb.production(mu_t, 1.0, k, tau) == pytest.approx(10 * C.c_mu * k / tau, rel=1e-15)


def test_tau_sources_are_chain_rule_of_omega_sources(rng):
    k, tau, gk, gt, S, d = _random_states(rng, 1000)
    ev = turb.evaluate_ktau(_state(k, tau, gk, gt, S, S, d))
    ko = turb.komega_sources(k, 1 / tau, gk, -gt / tau[:, None] ** 2, S, d, 1e-5)
    for part in ("production", "destruction", "cross_diffusion"):
        assert _rel(ev.parts[part], -tau ** 2 * ko.parts[part]) < 1e-10


def test_benton_factor_examples():
    assert turb.benton_factor(1.0, 20.0) == 1.0
    assert turb.benton_factor(1.0, 1.0) == pytest.approx(0.1, abs=1e-16)
    assert turb.benton_factor(1.0, 0.0) == 0.0


def test_komega_examples():
    ko = turb.komega_sources(np.ones(1), np.full(1, 0.5), np.zeros((1, 2)), np.zeros((1, 2)),
                             np.zeros(1), np.ones(1), 1e-5)
    # S = 0: the k source is destruction only, -beta* k omega
    assert ko.source_k[0] == pytest.approx(-0.045, abs=1e-15)
    ko = turb.komega_sources(np.ones(1), np.ones(1), np.array([[1.0, 0.0]]),
                             np.array([[-1.0, 0.0]]), np.ones(1), np.ones(1), 1e-5)
    assert ko.cd_kw[0] == 1e-10


def test_stau_identity(rng):
    tau = 10 ** rng.uniform(-4, 2, 1000)
    g = rng.standard_normal((1000, 2))
    a = turb.stau_term(0.3, tau, grad_tau=g)
    assert _rel(a, 2 * 0.3 * np.sum(g ** 2, axis=1) / tau) < 1e-12


# --------------------------------------------------------------------------
# DDES
# --------------------------------------------------------------------------

def test_delay_function_values():
    fd, rd = turb.delay_function(np.zeros(1), 0.0, np.ones(1), np.ones(1), np.ones(1))
    assert fd[0] == 1.0 and rd[0] == 0.0
    fd, _ = turb.delay_function(np.full(1, 1e3), 1e-5, np.full(1, 1e-3), np.ones(1), np.ones(1))
    assert fd[0] < 1e-12
    # r_d = 0.05 exactly: nu_t + nu = 0.05 kappa^2 d^2 sqrt((S^2 + W^2) / 2)
    nu_t = 0.05 * 0.41 ** 2
    fd, rd = turb.delay_function(np.full(1, nu_t), 0.0, np.ones(1), np.ones(1), np.ones(1))
    assert rd[0] == pytest.approx(0.05, rel=1e-15)
    assert fd[0] == pytest.approx(1 - math.tanh(1.0), abs=1e-14)
    assert fd[0] == pytest.approx(0.23840584, abs=1e-8)


def test_ddes_length_example():
    dd = turb.ddes_length_scale(1.0, 0.09, 1.0, 0.0, 0.5)
    assert float(dd.l_rans) == pytest.approx(1.0, rel=1e-15)
    assert float(dd.l_les) == pytest.approx(0.39, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-8, 1.0), st.floats(1e-4, 1e2), st.floats(0, 1), st.floats(0, 1),
       st.floats(1e-4, 1.0))
def test_ddes_bounds_property(k, tau, F1, fd, h):
    dd = turb.ddes_length_scale(k, tau, F1, fd, h)
    lo = min(float(dd.l_rans), float(dd.l_les))
    assert lo * (1 - 1e-14) <= float(dd.l_ddes) <= float(dd.l_rans) * (1 + 1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 1.0), st.floats(1e-4, 1e2), st.floats(0, 1), st.floats(1e-4, 1.0))
def test_ddes_reduces_to_sst_at_fd_zero(k, tau, F1, h):
    dd = turb.ddes_length_scale(k, tau, F1, 0.0, h)
    assert float(dd.destruction) == pytest.approx(C.beta_star * k / tau, rel=1e-12)
    dd = turb.ddes_length_scale(k, tau, F1, 1.0, h)
    assert float(dd.l_ddes) == pytest.approx(min(float(dd.l_rans), float(dd.l_les)), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(1e-3, 10.0), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(1e-3, 1e2), st.floats(1e-3, 1.0))
def test_duality_property(k, tau, gx, gy, S, d):
    gk = np.array([[gx, gy]])
    gt = np.array([[gy, -gx]]) * 0.3
    ev = turb.evaluate_ktau(_state(k, tau, gk, gt, S, S, d))
    ko = turb.komega_sources(np.array([k]), np.array([1 / tau]), gk, -gt / tau ** 2,
                             np.array([S]), np.array([d]), 1e-5)
    assert _rel(ev.F1, ko.F1) < 1e-12 and _rel(ev.mu_t, ko.mu_t) < 1e-12
