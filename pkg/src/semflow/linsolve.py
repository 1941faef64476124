"""Matrix-free Krylov solvers and preconditioners on global node vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix, diags
from scipy.sparse.linalg import splu

from .errors import SolverError


@dataclass
class SolveReport:
    iterations: int
    initial_residual: float
    final_residual: float
    converged: bool
    tolerance: float = 0.0
    history: list = None

    @property
    def relative_residual(self):
        if self.initial_residual == 0.0:
            return 0.0
        return self.final_residual / self.initial_residual


def _identity(r):
    return r


def _mean_free(v):
    return v - v.mean()


def pcg(apply, rhs, precond=None, tol=1e-10, maxit=1000, x0=None, project_mean=False, atol=0.0):
    """Preconditioned conjugate gradients with minimal-residual smoothing.

    The CG recurrence is unchanged; the returned iterate is the smoothed one,
    whose residual norm in the preconditioned inner product ``<r, M^-1 r>``
    never increases. Convergence: ``||r||_P <= max(tol * ||b||_P, atol)``.

    With ``project_mean`` the right-hand side, residuals and preconditioned
    residuals are kept orthogonal to constants (pure-Neumann null space).
    """
    M = precond or _identity
    proj = _mean_free if project_mean else _identity
    b = proj(np.asarray(rhs, dtype=float))
    zb = proj(M(b))
    bnorm = float(np.sqrt(max(b @ zb, 0.0)))
    n = b.size
    if bnorm == 0.0:
        x = np.zeros(n)
        return x, SolveReport(0, 0.0, 0.0, True, tol, [0.0])
    x = np.zeros(n) if x0 is None else proj(np.array(x0, dtype=float))
    r = b - apply(x) if x0 is not None else b.copy()
    r = proj(r)
    z = proj(M(r))
    rz = float(r @ z)
    res0 = float(np.sqrt(max(rz, 0.0)))
    # smoothed sequence
    xs, s, t = x.copy(), r.copy(), z.copy()
    snorm2 = rz
    hist = [np.sqrt(max(snorm2, 0.0)) / bnorm]
    tol = max(tol, atol / bnorm)
    if hist[-1] <= tol:
        return xs, SolveReport(0, res0, hist[-1] * bnorm, True, tol, hist)
    p = z.copy()
    it = 0
    converged = False
    while it < maxit:
        it += 1
        Ap = apply(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError(f"pcg breakdown: nonpositive curvature {pAp:.3e} at iteration {it}",
                              iteration=it)
        alpha = rz / pAp
        x = x + alpha * p
        r = proj(r - alpha * Ap)
        z = proj(M(r))
        rz_new = float(r @ z)
        # minimal residual smoothing in the preconditioned inner product
        dr = r - s
        dz = z - t
        den = float(dz @ dr)
        eta = 0.0 if den <= 0.0 else -float(t @ dr) / den
        eta = min(max(eta, 0.0), 1.0) if den > 0.0 else 1.0
        xs = xs + eta * (x - xs)
        s = s + eta * dr
        t = t + eta * dz
        snorm2 = float(s @ t)
        hist.append(np.sqrt(max(snorm2, 0.0)) / bnorm)
        if hist[-1] <= tol:
            converged = True
            break
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    rep = SolveReport(it, res0, hist[-1] * bnorm, converged, tol, hist)
    return xs, rep


def gmres(apply, rhs, precond=None, tol=1e-10, restart=30, maxit=1000, x0=None,
          project_mean=False):
    """Right-preconditioned restarted GMRES with modified Gram-Schmidt.

    Convergence is measured on the true residual, ``||b - A x|| <= tol ||b||``.
    A restart cycle that fails to reduce the residual ends the solve with
    ``converged=False``.
    """
    M = precond or _identity
    proj = _mean_free if project_mean else _identity
    b = proj(np.asarray(rhs, dtype=float))
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, 0.0, True, tol, [0.0])
    x = np.zeros(n) if x0 is None else proj(np.array(x0, dtype=float))
    r = proj(b - apply(x))
    beta = float(np.linalg.norm(r))
    res0 = beta
    hist = [beta / bnorm]
    it = 0
    converged = beta <= tol * bnorm
    while not converged and it < maxit:
        cycle_start = beta
        m = min(restart, maxit - it)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            it += 1
            Z[k] = proj(M(V[k]))
            w = proj(apply(Z[k]))
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w = w - H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            happy = H[k + 1, k] <= 1e-14 * max(1.0, abs(H[k, k]))
            if not happy:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):
                tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = tmp
            den = np.hypot(H[k, k], H[k + 1, k])
            if den == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / den, H[k + 1, k] / den
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            hist.append(abs(g[k + 1]) / bnorm)
            if abs(g[k + 1]) <= tol * bnorm or happy:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]) + np.diag(
            np.where(np.abs(np.diag(H[:k_used, :k_used])) == 0, 1e-300, 0.0)), g[:k_used])
        x = x + Z[:k_used].T @ y
        r = proj(b - apply(x))
        beta = float(np.linalg.norm(r))
        hist[-1] = beta / bnorm
        converged = beta <= tol * bnorm
        if not converged and beta >= cycle_start * (1.0 - 1e-3):
            break  # stagnation across a full cycle
    return x, SolveReport(it, res0, beta, bool(converged), tol, hist)


# ---------------------------------------------------------------------------
# preconditioners
# ---------------------------------------------------------------------------

def jacobi(diagonal, mask=None):
    inv = 1.0 / np.asarray(diagonal, dtype=float)
    if mask is not None:
        inv = inv * mask

    def apply(r):
        return inv * r

    return apply


class TwoLevelPreconditioner:
    """Additive Jacobi smoother plus a vertex-based (N=1) Galerkin coarse solve.

    ``z = D^-1 r + P A_c^-1 P^T r`` where ``P`` interpolates bilinearly from
    element vertices to GLL nodes and ``A_c = P^T A P`` is assembled from the
    element operators. A singular coarse operator (pure Neumann) is pinned at
    one vertex.
    """

    def __init__(self, space, diffusivity=1.0, reaction=0.0, mask=None, singular=False):
        self.space = space
        mesh = space.mesh
        N = mesh.order
        nodes = space.basis.nodes
        r = nodes[:, None]
        s = nodes[None, :]
        self.phi = np.stack([(1 - r) * (1 - s) / 4, (1 + r) * (1 - s) / 4,
                             (1 + r) * (1 + s) / 4, (1 - r) * (1 + s) / 4])  # (4, nq, nq)
        corner_ids = np.stack([mesh.global_ids[:, 0, 0], mesh.global_ids[:, N, 0],
                               mesh.global_ids[:, N, N], mesh.global_ids[:, 0, N]], axis=1)
        uniq, inv = np.unique(corner_ids, return_inverse=True)
        self.coarse_ids = inv.reshape(corner_ids.shape)  # (E, 4)
        nc = len(uniq)
        self.nc = nc
        self.mask = np.ones(space.n_global) if mask is None else np.asarray(mask, dtype=float)
        E = mesh.n_elements
        # element coarse matrices A_c^e = Phi^T A_e Phi
        Ac = np.empty((E, 4, 4))
        for a in range(4):
            fa = np.broadcast_to(self.phi[a], space.shape) * 1.0
            Af = space.helmholtz_apply(fa, diffusivity, reaction)
            for b in range(4):
                Ac[:, b, a] = np.einsum("eij,ij->e", Af, self.phi[b])
        rows = np.repeat(self.coarse_ids, 4, axis=1).ravel()
        cols = np.tile(self.coarse_ids, (1, 4)).ravel()
        A = coo_matrix((Ac.reshape(E, 16).ravel(), (rows, cols)), shape=(nc, nc)).tocsr()
        cmask = np.ones(nc, dtype=bool)
        node_mask = self.mask[uniq]
        cmask &= node_mask > 0
        if singular and cmask.all():
            cmask[0] = False
        self.cmask = cmask
        keep = np.flatnonzero(cmask)
        self.keep = keep
        if keep.size:
            self.lu = splu(csc_matrix(A[keep][:, keep]))
        else:
            self.lu = None
        diag = space.gather(space.helmholtz_diagonal(diffusivity, reaction))
        self.inv_diag = self.mask / diag
        self.weight = 1.0 / space.valence

    def restrict(self, r):
        """``P^T r`` for a global vector ``r``."""
        loc = (r * self.weight * self.mask)[self.space.ids]
        vals = np.einsum("eij,aij->ea", loc, self.phi)
        return np.bincount(self.coarse_ids.ravel(), weights=vals.ravel(), minlength=self.nc)

    def prolong(self, c):
        loc = np.einsum("ea,aij->eij", c[self.coarse_ids], self.phi)
        return self.space.gather(loc * self.weight[self.space.ids]) * self.mask

    def __call__(self, r):
        z = self.inv_diag * r
        if self.lu is not None:
            rc = self.restrict(r)
            c = np.zeros(self.nc)
            c[self.keep] = self.lu.solve(rc[self.keep])
            z = z + self.prolong(c)
        return z


def assemble_helmholtz(space, diffusivity=1.0, reaction=0.0, mask=None):
    """Assembled sparse matrix of the masked Helmholtz operator on global nodes.

    Element matrices are obtained by applying :meth:`SEMSpace.helmholtz_apply`
    to each local basis function; masked (Dirichlet) rows and columns are
    replaced by the identity.
    """
    nq = space.basis.nq
    E = space.mesh.n_elements
    ids = space.ids.reshape(E, -1)
    n = nq * nq
    blocks = np.empty((E, n, n))
    for a in range(n):
        f = np.zeros(space.shape)
        f.reshape(E, -1)[:, a] = 1.0
        blocks[:, :, a] = space.helmholtz_apply(f, diffusivity, reaction).reshape(E, -1)
    rows = np.repeat(ids, n, axis=1).ravel()
    cols = np.tile(ids, (1, n)).ravel()
    A = coo_matrix((blocks.ravel(), (rows, cols)), shape=(space.n_global,) * 2).tocsr()
    if mask is not None:
        A = _mask_matrix(A, mask)
    return A


def _mask_matrix(A, mask):
    m = diags(np.asarray(mask, dtype=float))
    return (m @ A @ m + diags(1.0 - np.asarray(mask, dtype=float))).tocsc()


class DirectPreconditioner:
    """Sparse LU factorisation of an assembled operator used as preconditioner.

    For a singular (pure Neumann) operator one unknown is pinned, which makes
    the factorisation a right inverse on the mean-free subspace.
    """

    def __init__(self, matrix, singular=False):
        A = csc_matrix(matrix)
        self.pin = None
        if singular:
            self.pin = int(np.argmax(np.abs(A.diagonal())))
            keep = np.ones(A.shape[0])
            keep[self.pin] = 0.0
            A = _mask_matrix(A, keep)
        self.lu = splu(csc_matrix(A))

    def __call__(self, r):
        r = np.array(r, dtype=float)
        if self.pin is not None:
            r[self.pin] = 0.0
        return self.lu.solve(r)
