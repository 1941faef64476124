"""Streamwise-homogeneous turbulent channel reduced to one wall-normal dimension.

The half channel ``0 <= y <= 1`` (wall at 0, centreline at 1) is driven by a
unit mean pressure gradient, so the friction velocity is 1 and ``Re_tau = 1/nu``.
Mean velocity, k and tau (or omega for the reference model) are discretised
with a 1D spectral-element basis and iterated to steady state in pseudo time
with linearly implicit diffusion and destruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import turbulence as turb
from .errors import SolverError
from .mesh import build_reference_basis
from .meshgen import stretched


@dataclass
class Channel1D:
    """1D SEM discretisation of the half channel."""

    y: np.ndarray          # global nodes
    mass: np.ndarray       # lumped (GLL) mass, global
    elem_ids: np.ndarray   # (E, N+1) global node ids
    jac: np.ndarray        # (E,) element half lengths
    basis: object

    @classmethod
    def build(cls, n_elements=12, order=8, ratio=1.35):
        basis = build_reference_basis(order)
        edges = stretched(n_elements, ratio)
        h = np.diff(edges)
        ids = np.arange(n_elements)[:, None] * order + np.arange(order + 1)[None, :]
        y = np.empty(n_elements * order + 1)
        for e in range(n_elements):
            y[ids[e]] = edges[e] + 0.5 * h[e] * (basis.nodes + 1)
        jac = 0.5 * h
        mass = np.zeros_like(y)
        np.add.at(mass, ids, jac[:, None] * basis.weights[None, :])
        return cls(y, mass, ids, jac, basis)

    def derivative(self, f):
        """Nodal derivative, averaged at element interfaces."""
        return self.derivative_matrix() @ f

    def derivative_matrix(self):
        if getattr(self, "_G", None) is None:
            D = self.basis.deriv_matrix
            n = self.y.size
            G = np.zeros((n, n))
            cnt = np.zeros(n)
            for e, ids in enumerate(self.elem_ids):
                G[np.ix_(ids, ids)] += D / self.jac[e]
                cnt[ids] += 1.0
            self._G = G / cnt[:, None]
        return self._G

    def stiffness(self, coeff):
        """Dense ``K_ij = int a phi_i' phi_j'`` for nodal coefficient ``a``."""
        D = self.basis.deriv_matrix
        w = self.basis.weights
        n = self.y.size
        K = np.zeros((n, n))
        for e, ids in enumerate(self.elem_ids):
            a = coeff[ids] * w / self.jac[e]
            K[np.ix_(ids, ids)] += D.T @ (a[:, None] * D)
        return K

    def integrate(self, f):
        return float(self.mass @ f)


@dataclass
class ChannelSolution:
    y: np.ndarray
    u: np.ndarray
    k: np.ndarray
    tau: np.ndarray      # for the omega model, 1/omega off the wall
    nu_t: np.ndarray
    nu: float
    iterations: int
    residual: float
    model: str
    mass: np.ndarray = None

    @property
    def y_plus(self):
        return self.y / self.nu

    def log_slope(self, lo=30.0, hi=100.0):
        """Least-squares slope of ``U+`` against ``ln y+`` over ``lo < y+ < hi``."""
        yp = self.y_plus
        sel = (yp > lo) & (yp < hi)
        if sel.sum() < 3:
            # interpolate onto a log-spaced grid when too few nodes fall in the band
            yq = np.geomspace(lo, hi, 50)
            uq = np.interp(yq, yp, self.u)
            return float(np.polyfit(np.log(yq), uq, 1)[0])
        return float(np.polyfit(np.log(yp[sel]), self.u[sel], 1)[0])


def _solve(A, b, values):
    """Solve ``A x = b`` with Dirichlet values ``{node: value}`` eliminated."""
    A = A.copy()
    b = b.copy()
    for i, val in values.items():
        b -= A[:, i] * val
        A[i, :] = 0.0
        A[:, i] = 0.0
        A[i, i] = 1.0
        b[i] = val
    return np.linalg.solve(A, b)


def _positive_split(src, react, phi):
    """Move negative explicit sources into the implicit reaction (keeps phi >= 0)."""
    neg = np.minimum(src, 0.0)
    return src - neg, react - neg / np.maximum(phi, turb.TAU_FLOOR)


def _initial_profiles(y, nu, consts):
    yp = y / nu
    u = np.where(yp < 11.0, yp, np.log(np.maximum(yp, 1e-12)) / consts.kappa + 5.2)
    k = 3.0 * (1.0 - np.exp(-yp / 10.0)) ** 2
    omega = np.maximum(1.0 / (np.sqrt(consts.beta_star) * consts.kappa * np.maximum(y, 1e-12)),
                       1.0)
    omega = np.minimum(omega, 6.0 * nu / (consts.beta1 * np.maximum(y, 1e-12) ** 2))
    return u, k, omega


# wall-element thickness matters for the omega model only (see solve_channel)
DEFAULT_GRIDS = {"ktau": (12, 8, 1.35), "komega": (16, 8, 1.35)}


def solve_channel(model="ktau", re_tau=550.0, n_elements=None, order=8, ratio=1.35, dtau=5.0,
                  tol=1e-8, max_iter=20000, consts=turb.SstConstants(), disc=None,
                  callback=None, initial=None):
    """Steady SST solution of the half channel.

    ``model`` is ``"ktau"`` (tau = 0 at the wall) or ``"komega"``. For the
    omega model the nodes of the wall element carry the viscous-sublayer
    asymptote ``omega = 6 nu / (beta1 y^2)``, which a polynomial cannot
    represent; the wall node itself gets ``10 * 6 nu / (beta1 y1^2)``. The
    default omega grid keeps that element below ``y+ ~ 2``.

    The tau equation is iterated in ``r = sqrt(tau)``. In tau itself the
    linearised wall operator admits a mode ``~ y`` that ``tau(0) = 0`` does
    not exclude, and the iteration drifts off the regular ``tau ~ y^2``
    branch; in ``r`` the wall condition is sufficient.

    Pseudo time is local, ``dt_i = dtau / (1 + dtau S_i)``, so the stiff
    near-wall shear does not limit the outer region. The Benton factor
    multiplies the whole right-hand side of the tau equation and so does not
    change steady states where eddy viscosity is present; the pseudo-time
    iteration omits it.
    """
    if model not in ("ktau", "komega"):
        raise ValueError(f"unknown channel model {model!r}")
    if disc is None:
        ne = n_elements or DEFAULT_GRIDS[model][0]
        disc = Channel1D.build(ne, order, ratio if n_elements else DEFAULT_GRIDS[model][2])
    y = disc.y
    nu = 1.0 / re_tau
    M = disc.mass
    c = consts
    u, k, omega = _initial_profiles(y, nu, c)
    off = y > 0
    tau = np.where(off, 1.0 / omega, 0.0)
    if initial is not None:
        u, k, tau = (np.array(a, dtype=float) for a in initial)
        omega = np.where(off, 1.0 / np.maximum(tau, turb.TAU_FLOOR), 1.0)
    npe = disc.elem_ids.shape[1]
    omega_fixed = {0: 10.0 * 6.0 * nu / (c.beta1 * y[1] ** 2)}
    for i in range(1, npe):
        omega_fixed[i] = 6.0 * nu / (c.beta1 * y[i] ** 2)
    for i, val in omega_fixed.items():
        omega[i] = val
    wall = {0: 0.0}
    res = np.inf
    it = 0
    nut = np.zeros_like(y)
    for it in range(1, max_iter + 1):
        du = disc.derivative(u)
        S = np.abs(du)
        dk = disc.derivative(k)
        dt = dtau / (1.0 + dtau * S)
        Md = M / dt
        nut = np.zeros_like(y)
        F1 = np.ones_like(y)
        if model == "ktau":
            tf = np.maximum(tau, turb.TAU_FLOOR)
            s = turb.LocalClosureState(k=k[off], tau=tf[off], grad_k=dk[off, None],
                                       grad_tau=disc.derivative(tau)[off, None], S=S[off],
                                       Omega=S[off], d=y[off], nu=nu,
                                       grad_sqrt_tau=disc.derivative(np.sqrt(tau))[off, None])
            ev = turb.evaluate_ktau(s, c)
            F1[off] = ev.F1
            nut[off] = ev.mu_t
            inv_t = 1.0 / tf
        else:
            ko = turb.komega_sources(k[off], omega[off], dk[off, None],
                                     disc.derivative(omega)[off, None], S[off], y[off], nu, 1.0, c)
            F1[off] = ko.F1
            nut[off] = ko.mu_t
            inv_t = omega
        _, beta, sk, sw, _ = turb.blend_constants(F1, c)
        # mean momentum under a unit pressure gradient
        A = np.diag(Md) + disc.stiffness(nu + nut)
        u_new = _solve(A, M * (u / dt + 1.0), wall)
        # k: destruction implicit, limited production explicit
        P = np.minimum(nut * S**2, 10.0 * c.c_mu * k * inv_t)
        A = (np.diag(Md + M * c.beta_star * inv_t)
             + disc.stiffness(turb.effective_diffusivity(nu, nut, sk)))
        k_new = np.maximum(_solve(A, M * (k / dt + P), wall), 0.0)
        if model == "ktau":
            # iterate on r = sqrt(tau); with tau = r^2 the tau equation becomes
            # r_t = (G r')' - 3 G r'^2 / r + (beta - alpha tau^2 P / mu_t + cross) / (2 r)
            # whose wall condition r = 0 fixes the regular branch tau ~ y^2
            gw = turb.effective_diffusivity(nu, nut, sw)
            r = np.sqrt(np.maximum(tau, 0.0))
            rf = np.maximum(r, np.sqrt(turb.TAU_FLOOR))
            dr = disc.derivative(r)
            # B = beta + cross; N(r) = -3 G r'^2 / r + B / (2 r) linearised by Newton
            # in (r, r'), production -(alpha/2) r^3 S^2 lagged as a reaction
            B = np.zeros_like(y)
            B[off] = ev.parts["destruction"] + ev.parts["cross_diffusion"]
            prod_r = np.zeros_like(y)
            prod_r[off] = -ev.parts["production"] / (2.0 * rf[off] ** 2)
            src = np.where(off, B / rf, 0.0)
            react = np.where(off, B / (2.0 * rf**2) - 3.0 * gw * (dr / rf) ** 2, 0.0) + prod_r
            vel = np.where(off, 6.0 * gw * dr / rf, 0.0)
            A = (np.diag(Md + M * react) + disc.stiffness(gw)
                 + (M * vel)[:, None] * disc.derivative_matrix())
            r_new = np.maximum(_solve(A, M * (r / dt + src), wall), 0.0)
            new = r_new**2
            old, tau = tau, new
        else:
            src = np.zeros_like(y)
            src[off] = ko.parts["production"] + ko.parts["cross_diffusion"]
            src, react = _positive_split(src, beta * omega, omega)
            gw = turb.effective_diffusivity(nu, nut, sw)
            A = np.diag(Md + M * react) + disc.stiffness(gw)
            new = np.maximum(_solve(A, M * (omega / dt + src), omega_fixed), 1e-12)
            old, omega = omega, new
        rel = [np.abs(u_new - u) / max(np.max(np.abs(u_new)), 1e-300),
               np.abs(k_new - k) / max(np.max(k_new), 1e-300),
               np.abs(new - old) / max(np.max(np.abs(new[off])), 1e-300)]
        res = max(float(np.max(r / dt)) for r in rel)
        u, k = u_new, k_new
        if callback is not None:
            callback(it, res, dict(u=u, k=k, tau=tau, omega=omega, nu_t=nut, dt=dt))
        if not np.isfinite(res):
            raise SolverError(f"channel {model} iteration produced non-finite values", iteration=it)
        if res < tol:
            break
    else:
        raise SolverError(f"channel {model} iteration did not converge: residual {res:.3e}")
    if model == "komega":
        tau = np.where(off, 1.0 / omega, 0.0)
    return ChannelSolution(y, u, k, tau, nut, nu, it, res, model, M)


def profile_difference(a: ChannelSolution, b: ChannelSolution):
    """Relative L2 difference ``||U_a - U_b|| / ||U_b||`` of mean-velocity profiles.

    Uses the quadrature of ``a``; ``b`` is interpolated onto ``a``'s nodes when
    the grids differ.
    """
    ub = b.u if (a.y.shape == b.y.shape and np.allclose(a.y, b.y)) else np.interp(a.y, b.y, b.u)
    m = a.mass if a.mass is not None else np.gradient(a.y)
    return float(np.sqrt(np.sum(m * (a.u - ub) ** 2) / np.sum(m * ub**2)))
