import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from semflow.linsolve import (DirectPreconditioner, TwoLevelPreconditioner, assemble_helmholtz,
                              gmres, jacobi, pcg)
from semflow.meshgen import box_mesh
from semflow.sem_ops import SEMSpace


def _dirichlet_poisson(N=8, n_el=4):
    m = box_mesh(n_el, n_el, N)
    sp = SEMSpace(m)
    mask = (~m.boundary_node_mask("wall")).astype(float)
    ue = np.sin(np.pi * m.x) * np.sin(np.pi * m.y)
    b = mask * sp.gather(sp.geom.mass * 2 * np.pi ** 2 * ue)

    def A(x):
        return mask * sp.gather(sp.helmholtz_apply(sp.scatter(mask * x)))

    return sp, mask, ue, b, A


def test_pcg_mass_matrix_one_iteration(square_space, rng):
    sp = square_space
    M = sp.mass_global
    x, rep = pcg(lambda v: M * v, rng.standard_normal(sp.n_global), jacobi(M), tol=1e-12)
    assert rep.converged and rep.iterations == 1


def test_pcg_zero_rhs():
    x, rep = pcg(lambda v: 2 * v, np.zeros(10))
    assert rep.iterations == 0 and np.all(x == 0)


def test_pcg_poisson_manufactured():
    sp, mask, ue, b, A = _dirichlet_poisson()
    u, rep = pcg(A, b, TwoLevelPreconditioner(sp, mask=mask), tol=1e-10, maxit=500)
    assert rep.converged and rep.relative_residual <= 1e-10
    # N = 8 discretisation error is ~1e-7
    assert np.abs(sp.scatter(u) - ue).max() < 1e-6


def test_preconditioners_agree():
    sp, mask, ue, b, A = _dirichlet_poisson(N=6, n_el=6)
    diag = mask * sp.gather(sp.helmholtz_diagonal()) + (1 - mask)
    u1, r1 = pcg(A, b, jacobi(diag), tol=1e-12, maxit=2000)
    u2, r2 = pcg(A, b, TwoLevelPreconditioner(sp, mask=mask), tol=1e-12)
    u3, r3 = pcg(A, b, DirectPreconditioner(assemble_helmholtz(sp, mask=mask)), tol=1e-12)
    assert r3.iterations <= 2 and r2.iterations < r1.iterations
    np.testing.assert_allclose(u1, u3, atol=1e-9)
    np.testing.assert_allclose(u2, u3, atol=1e-9)


def test_assembled_matrix_matches_matrix_free(rng):
    sp, mask, ue, b, A = _dirichlet_poisson(N=4, n_el=2)
    K = assemble_helmholtz(sp, mask=mask)
    x = mask * rng.standard_normal(sp.n_global)
    np.testing.assert_allclose(K @ x, A(x), atol=1e-12)


def test_gmres_identity_one_iteration(rng):
    b = rng.standard_normal(40)
    x, rep = gmres(lambda v: v, b)
    assert rep.converged and rep.iterations == 1
    np.testing.assert_allclose(x, b)


def _convection_diffusion(n=60, pe=20.0):
    h = 1.0 / (n + 1)
    main = 2 / h ** 2 * np.ones(n)
    lo = (-1 / h ** 2 - pe / (2 * h)) * np.ones(n - 1)
    up = (-1 / h ** 2 + pe / (2 * h)) * np.ones(n - 1)
    return np.diag(main) + np.diag(lo, -1) + np.diag(up, 1)


def test_gmres_nonsymmetric_matches_dense_solve(rng):
    A = _convection_diffusion()
    b = rng.standard_normal(A.shape[0])
    x, rep = gmres(lambda v: A @ v, b, tol=1e-10, restart=80)
    ref = np.linalg.solve(A, b)
    assert rep.converged and np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)
    np.testing.assert_allclose(x, ref, rtol=1e-7, atol=1e-9 * np.abs(ref).max())


def _neumann(N=4, n_el=3):
    m = box_mesh(n_el, n_el, N)
    sp = SEMSpace(m)
    f = np.cos(np.pi * m.x) * np.cos(np.pi * m.y) + 0.1
    return sp, sp.gather(sp.geom.mass * f), (lambda x: sp.gather(sp.helmholtz_apply(sp.scatter(x))))


def test_gmres_singular_with_projection_converges():
    sp, b, A = _neumann()
    x, rep = gmres(A, b, tol=1e-10, restart=40, maxit=2000, project_mean=True)
    assert rep.converged
    r = b - b.mean() - A(x)
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(b)


def test_gmres_singular_without_projection_stagnates():
    sp, b, A = _neumann()
    x, rep = gmres(A, b, tol=1e-10, restart=40, maxit=2000)
    assert not rep.converged
    assert rep.iterations < 2000


def test_pcg_singular_with_projection():
    sp, b, A = _neumann()
    x, rep = pcg(A, b, TwoLevelPreconditioner(sp, singular=True), tol=1e-10,
                 project_mean=True)
    assert rep.converged


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2 ** 31))
def test_pcg_spd_property(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    A = Q @ Q.T + n * np.eye(n)
    b = rng.standard_normal(n)
    x, rep = pcg(lambda v: A @ v, b, jacobi(np.diag(A)), tol=1e-12, maxit=10 * n)
    assert rep.converged
    np.testing.assert_allclose(A @ x, b, atol=1e-9 * np.linalg.norm(b) * np.linalg.cond(A))
    # the smoothed residual history never increases
    h = np.asarray(rep.history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])
