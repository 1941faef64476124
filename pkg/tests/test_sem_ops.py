import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semflow.errors import ParameterError
from semflow.mesh import build_reference_basis, mesh_from_vertices
from semflow.meshgen import box_mesh
from semflow.sem_ops import (SEMSpace, filter_weights, from_modal, highpass_apply,
                             last_mode_filter, lowpass_filter, make_filter, to_modal)


def _skewed_space(N=5):
    # affine but non-rectangular elements
    m = box_mesh(3, 2, N)
    v = m.vertices.copy()
    v[..., 0] += 0.3 * v[..., 1]
    tags = {(bf.element, bf.face): bf.tag for bf in m.boundary_faces}
    return SEMSpace(mesh_from_vertices(v, N, tags))


# --------------------------------------------------------------------------
# gradient
# --------------------------------------------------------------------------

def test_gradient_of_linear_field():
    sp = _skewed_space()
    x, y = sp.mesh.x, sp.mesh.y
    gx, gy = sp.gradient(3 * x + 2 * y)
    np.testing.assert_allclose(gx, 3, atol=1e-12)
    np.testing.assert_allclose(gy, 2, atol=1e-12)


def test_gradient_degree_n_exact():
    N = 7
    v = np.array([[[-1, -1], [1, -1], [1, 1], [-1, 1]]], dtype=float)
    sp = SEMSpace(mesh_from_vertices(v, N, {(0, f): "wall" for f in range(4)}))
    gx, _ = sp.gradient(sp.mesh.x ** N)
    np.testing.assert_allclose(gx, N * sp.mesh.x ** (N - 1), atol=1e-11)


def test_gradient_spectral_convergence():
    errs = []
    for N in (4, 6, 8):
        sp = SEMSpace(box_mesh(4, 4, N))
        x, y = sp.mesh.x, sp.mesh.y
        gx, _ = sp.gradient(np.sin(np.pi * x) * np.sin(np.pi * y))
        errs.append(np.abs(gx - np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)).max())
    assert errs[0] / errs[1] >= 10 and errs[1] / errs[2] >= 10


# --------------------------------------------------------------------------
# Helmholtz operator
# --------------------------------------------------------------------------

def test_constants_in_stiffness_null_space(square_space):
    out = square_space.helmholtz_apply(np.ones(square_space.shape))
    assert np.abs(out).max() < 1e-12


def test_helmholtz_symmetry(rng):
    sp = _skewed_space()
    nu = 1 + rng.random(sp.shape)
    for _ in range(20):
        f = sp.scatter(rng.standard_normal(sp.n_global))
        g = sp.scatter(rng.standard_normal(sp.n_global))
        a = np.sum(g * sp.helmholtz_apply(f, nu, 0.7))
        b = np.sum(f * sp.helmholtz_apply(g, nu, 0.7))
        assert abs(a - b) <= 1e-11 * max(abs(a), abs(b))


def test_helmholtz_matches_dense_assembly():
    # single element, N = 3: stiffness sum_q w_q J (grad l_i . grad l_j) + h B
    N = 3
    v = np.array([[[0, 0], [2, 0], [2.5, 1], [0.2, 1.2]]], dtype=float)
    sp = SEMSpace(mesh_from_vertices(v, N, {(0, f): "wall" for f in range(4)}))
    nq = N + 1
    g = sp.geom
    D = sp.basis.deriv_matrix
    I = np.eye(nq)
    Dr = np.kron(D, I)   # index (i, j) -> i * nq + j, r along i
    Ds = np.kron(I, D)
    rx, ry, sx, sy = (a[0].ravel() for a in (g.rx, g.ry, g.sx, g.sy))
    Dx = rx[:, None] * Dr + sx[:, None] * Ds
    Dy = ry[:, None] * Dr + sy[:, None] * Ds
    B = np.diag(g.mass[0].ravel())
    A = Dx.T @ B @ Dx + Dy.T @ B @ Dy + 0.3 * B
    f = np.random.default_rng(0).standard_normal((1, nq, nq))
    np.testing.assert_allclose(sp.helmholtz_apply(f, 1.0, 0.3).ravel(), A @ f.ravel(),
                               atol=1e-12)


# --------------------------------------------------------------------------
# direct stiffness summation
# --------------------------------------------------------------------------

def test_dssum_of_one_is_valence(square_space):
    sp = square_space
    np.testing.assert_array_equal(sp.dssum(np.ones(sp.shape)), sp.valence[sp.ids])
    assert sp.valence.max() == 4


def test_dssum_average_identity_on_continuous_field(square_space, rng):
    sp = square_space
    f = sp.scatter(rng.standard_normal(sp.n_global))
    np.testing.assert_allclose(sp.dssum(f) / sp.valence[sp.ids], f, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_dssum_conserves_sum(seed):
    sp = _SPACE
    f = np.random.default_rng(seed).standard_normal(sp.shape)
    assert abs(sp.gather(f).sum() - f.sum()) < 1e-10


_SPACE = SEMSpace(box_mesh(3, 3, 4, periodic_x=True))


# --------------------------------------------------------------------------
# modal transforms and filters
# --------------------------------------------------------------------------

def test_p3_is_single_mode():
    b = build_reference_basis(6)
    r = b.nodes[:, None] * np.ones(7)[None, :]
    c = to_modal(np.polynomial.legendre.Legendre.basis(3)(r)[None], b)[0]
    assert abs(c[3, 0] - 1) < 1e-12
    c[3, 0] = 0
    assert np.abs(c).max() < 1e-12


def test_modal_round_trip(rng):
    b = build_reference_basis(7)
    f = rng.standard_normal((5, 8, 8))
    assert np.abs(from_modal(to_modal(f, b), b) - f).max() < 1e-12


def test_constant_only_mode_zero():
    b = build_reference_basis(5)
    c = to_modal(np.full((1, 6, 6), 2.5), b)[0]
    assert abs(c[0, 0] - 2.5) < 1e-13
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-13


def test_filter_weights_exact():
    s = filter_weights(8, 3)
    assert s[6] == (2 / 3) ** 2 and s[7] == (1 / 3) ** 2 and s[8] == 0
    assert np.all(s[:6] == 1)
    s = filter_weights(8, 2)
    assert s[7] == (1 / 2) ** 2 and s[8] == 0 and np.all(s[:7] == 1)


def test_filter_m_zero_is_identity():
    assert np.all(filter_weights(8, 0) == 1)


def test_filter_rejects_bad_m():
    with pytest.raises(ParameterError):
        filter_weights(4, 5)
    with pytest.raises(ParameterError):
        make_filter(4, 1, chi=-1)


def _low_degree_field(b, deg, rng):
    c = np.zeros((1, b.order + 1, b.order + 1))
    c[0, :deg + 1, :deg + 1] = rng.standard_normal((deg + 1, deg + 1))
    return from_modal(c, b)


def test_lowpass_preserves_low_degree(rng):
    b = build_reference_basis(8)
    spec = make_filter(8, 3)
    f = _low_degree_field(b, 5, rng)
    assert np.abs(lowpass_filter(f, spec, b) - f).max() < 1e-12
    assert np.abs(highpass_apply(f, spec, b)).max() < 1e-12


def test_last_mode_filter_touches_only_mode_n(rng):
    b = build_reference_basis(6)
    f = rng.standard_normal((2, 7, 7))
    c = to_modal(highpass_apply(f, last_mode_filter(6), b), b)
    inner = c[:, :6, :6]
    assert np.abs(inner).max() < 1e-12
    assert np.abs(c[:, 6, :]).max() > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2 ** 31))
def test_highpass_linear(a, bcoef, seed):
    b = build_reference_basis(5)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, 3, 6, 6))
    spec = make_filter(5, 2)
    lhs = highpass_apply(a * f + bcoef * g, spec, b)
    rhs = a * highpass_apply(f, spec, b) + bcoef * highpass_apply(g, spec, b)
    assert np.abs(lhs - rhs).max() < 1e-12 * (1 + abs(a) + abs(bcoef)) * 10


def test_convect_linear_field_exact():
    sp = _skewed_space(6)
    x, y = sp.mesh.x, sp.mesh.y
    out = sp.convect(np.ones(sp.shape), 2 * np.ones(sp.shape), x + 3 * y)
    np.testing.assert_allclose(out, 7.0, atol=1e-12)
