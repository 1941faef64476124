"""Tensor-product spectral-element operators.

All element-local kernels are small dense matrix products applied along one
reference direction at a time (sum factorisation): ``D @ f`` differentiates
along ``r`` and ``f @ D.T`` along ``s`` for every element at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import ParameterError
from .mesh import build_reference_basis, compute_geometric_factors


class SEMSpace:
    """A mesh together with its basis, metrics and gather-scatter maps.

    Fields live in element layout ``(E, N+1, N+1)``; "global" vectors hold one
    value per distinct GLL node.
    """

    def __init__(self, mesh, basis=None, geom=None):
        self.mesh = mesh
        self.basis = basis or build_reference_basis(mesh.order)
        self.geom = geom or compute_geometric_factors(mesh, self.basis)
        self.shape = mesh.x.shape
        self.ids = mesh.global_ids
        self._flat_ids = mesh.global_ids.ravel()
        self.n_global = mesh.n_global
        self.D = np.ascontiguousarray(self.basis.deriv_matrix)
        self.DT = np.ascontiguousarray(self.D.T)
        g = self.geom
        B = g.mass
        self.g11 = (g.rx**2 + g.ry**2) * B
        self.g12 = (g.rx * g.sx + g.ry * g.sy) * B
        self.g22 = (g.sx**2 + g.sy**2) * B
        self.valence = np.bincount(self._flat_ids, minlength=self.n_global).astype(float)
        self.mass_global = self.gather(B)
        self._dealias = None

    # -- gather / scatter -------------------------------------------------
    def gather(self, f):
        """Sum local contributions into global nodes."""
        return np.bincount(self._flat_ids, weights=np.ravel(f), minlength=self.n_global)

    def scatter(self, g):
        return g[self.ids]

    def dssum(self, f):
        """Direct stiffness summation: shared nodes receive the sum of all copies."""
        return self.scatter(self.gather(f))

    def average(self, f):
        """Mass-weighted continuous projection of a (possibly discontinuous) field."""
        return self.scatter(self.gather(self.geom.mass * f) / self.mass_global)

    def to_global(self, f):
        """Global vector from a field that is already continuous."""
        return self.gather(f / self.valence[self.ids])

    def integrate(self, f):
        return float(np.sum(self.geom.mass * f))

    # -- derivatives ------------------------------------------------------
    def reference_gradient(self, f):
        return self.D @ f, f @ self.DT

    def gradient(self, f):
        """Physical ``(df/dx, df/dy)`` per element (discontinuous across faces)."""
        fr, fs = self.reference_gradient(f)
        g = self.geom
        return g.rx * fr + g.sx * fs, g.ry * fr + g.sy * fs

    def weak_gradient_transpose(self, wx, wy):
        """Local vector ``(grad phi_i, w)`` for every basis function ``phi_i``."""
        g = self.geom
        B = g.mass
        a = B * (g.rx * wx + g.ry * wy)
        b = B * (g.sx * wx + g.sy * wy)
        return self.DT @ a + b @ self.D

    # -- Helmholtz operator ----------------------------------------------
    def helmholtz_apply(self, f, diffusivity=1.0, reaction=0.0):
        """Local action of ``reaction * M + K(diffusivity)`` before summation."""
        if np.any(np.asarray(diffusivity) <= 0):
            raise ParameterError("diffusivity must be positive everywhere")
        if np.any(np.asarray(reaction) < 0):
            raise ParameterError("reaction coefficient must be nonnegative")
        fr, fs = self.reference_gradient(f)
        a = diffusivity * (self.g11 * fr + self.g12 * fs)
        b = diffusivity * (self.g12 * fr + self.g22 * fs)
        out = self.DT @ a + b @ self.D
        if np.any(np.asarray(reaction) != 0):
            out = out + reaction * self.geom.mass * f
        return out

    def helmholtz_diagonal(self, diffusivity=1.0, reaction=0.0):
        """Local diagonal of :meth:`helmholtz_apply` (sum with :meth:`gather`)."""
        D = self.D
        nu = np.broadcast_to(diffusivity, self.shape)
        d2 = D**2  # d2[a, i] = D[a, i]^2
        diag = np.einsum("ai,eaj->eij", d2, nu * self.g11)
        diag += np.einsum("bj,eib->eij", d2, nu * self.g22)
        dd = np.diag(D)
        diag += 2.0 * dd[None, :, None] * dd[None, None, :] * nu * self.g12
        return diag + reaction * self.geom.mass

    # -- advection --------------------------------------------------------
    def convect(self, u, v, f, dealias=False):
        """Advective derivative ``u . grad f``.

        Without dealiasing the product is collocated and returned per element;
        with dealiasing it is over-integrated on ``ceil(3N/2)+1`` Gauss points
        per direction and returned as a continuous (mass-projected) field.
        """
        if not dealias:
            fx, fy = self.gradient(f)
            return u * fx + v * fy
        J, JT, Bf, rxf, ryf, sxf, syf = self._dealias_data()
        fr, fs = self.reference_gradient(f)
        frf = J @ fr @ JT
        fsf = J @ fs @ JT
        uf = J @ u @ JT
        vf = J @ v @ JT
        conv = uf * (rxf * frf + sxf * fsf) + vf * (ryf * frf + syf * fsf)
        weak = JT @ (Bf * conv) @ J
        return self.scatter(self.gather(weak) / self.mass_global)

    def _dealias_data(self):
        if self._dealias is None:
            N = self.basis.order
            M = math.ceil(3 * N / 2)
            pts, wts = npleg.leggauss(M + 1)
            J = self.basis.interpolation_matrix(pts)
            JT = np.ascontiguousarray(J.T)
            mesh = self.mesh
            xr = J @ (self.D @ mesh.x) @ JT
            xs = J @ (mesh.x @ self.DT) @ JT
            yr = J @ (self.D @ mesh.y) @ JT
            ys = J @ (mesh.y @ self.DT) @ JT
            jac = xr * ys - xs * yr
            Bf = jac * wts[:, None] * wts[None, :]
            self._dealias = (J, JT, Bf, ys / jac, -xs / jac, -yr / jac, xr / jac)
        return self._dealias


# ---------------------------------------------------------------------------
# modal transforms and filters
# ---------------------------------------------------------------------------

def to_modal(f, basis):
    """Tensor Legendre coefficients ``c[..., k_r, k_s]`` of nodal values."""
    Vi = basis.inverse_vandermonde
    return Vi @ f @ Vi.T


def from_modal(coeffs, basis):
    V = basis.vandermonde
    return V @ coeffs @ V.T


@dataclass(frozen=True, eq=False)
class FilterSpec:
    """Quadratic-ramp low-pass filter damping the top ``modes`` Legendre modes."""

    order: int
    modes: int
    weights: np.ndarray
    chi: float = 0.0


def filter_weights(N, m):
    """``sigma_k = 1`` for ``k <= N-m``; ``((m-i)/m)^2`` for ``k = N-m+i``."""
    if not 0 <= m <= N:
        raise ParameterError(f"filter mode count m={m} must lie in [0, N={N}]")
    sigma = np.ones(N + 1)
    for i in range(1, m + 1):
        sigma[N - m + i] = ((m - i) / m) ** 2
    return sigma


def make_filter(N, m, chi=0.0):
    if chi < 0:
        raise ParameterError("relaxation weight chi must be nonnegative")
    return FilterSpec(N, m, filter_weights(N, m), float(chi))


def last_mode_filter(N, chi=0.0):
    """Filter acting on the highest mode only (a one-mode quadratic ramp)."""
    return make_filter(N, 1, chi)


def filter_matrix(basis, spec):
    if spec.order != basis.order:
        raise ParameterError(f"filter built for N={spec.order} used with N={basis.order}")
    return basis.vandermonde @ np.diag(spec.weights) @ basis.inverse_vandermonde


def lowpass_filter(f, spec, basis):
    F = filter_matrix(basis, spec)
    return F @ f @ F.T


def highpass_apply(f, spec, basis):
    """``f - (F x F) f``: the part of ``f`` removed by the low-pass filter."""
    return f - lowpass_filter(f, spec, basis)
