"""Semi-implicit BDFk/EXTk time advancement of incompressible flow with an
optional k-tau SST / DDES closure or the high-pass-filter LES relaxation.

One step is a velocity-correction splitting:

1. explicit terms (advection, eddy-viscosity remainder, HPF drain, forcing)
   are extrapolated and combined with the BDF history;
2. a pressure Poisson problem is solved with rotational (curl-curl) Neumann
   data;
3. velocity components are obtained from Helmholtz problems with the
   effective viscosity;
4. a discrete divergence projection (pressure test space of degree N-2 on
   Gauss points) removes the splitting divergence down to solver tolerance;
5. k and tau are advanced with implicit destruction, clipped, and the eddy
   viscosity and closure diagnostics are refreshed.

Fields are element-local arrays ``(E, N+1, N+1)``; unknowns of the linear
systems are global node vectors.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.sparse import coo_matrix, diags

from . import turbulence as turb
from .errors import ConfigurationError, DivergenceError, ParameterError, StepError
from .linsolve import (DirectPreconditioner, TwoLevelPreconditioner, assemble_helmholtz, gmres,
                        jacobi, pcg)
from .mesh import boundary_chains, compute_hmax, compute_wall_distance
from .sem_ops import SEMSpace, highpass_apply, make_filter

log = logging.getLogger(__name__)

MODELS = ("laminar", "rans_ktau", "ddes_ktau", "hpf_les")
TURBULENT_MODELS = ("rans_ktau", "ddes_ktau")
PRECONDITIONERS = ("two-level", "direct")
BENTON_MASS_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# time scheme
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeScheme:
    """BDF/EXT weights for one step.

    ``du/dt(t_{n+1}) ~ sum_j bdf[j] u^{n+1-j} / dt`` and
    ``f(t_{n+1}) ~ sum_j ext[j] f^{n-j}``.
    """

    order: int
    dt: float
    bdf: np.ndarray
    ext: np.ndarray

    @property
    def beta0(self):
        return float(self.bdf[0])

    @property
    def history_depth(self):
        return self.order


def bdfext_coefficients(order, dts):
    """Variable-step BDFk/EXTk coefficients.

    ``dts[0]`` is the step being taken, ``dts[1]`` the previous one, and so on;
    at least ``order`` entries are required.
    """
    if order not in (1, 2, 3):
        raise ParameterError(f"unsupported time-scheme order {order}")
    dts = [float(d) for d in dts]
    if len(dts) < order or any(d <= 0 for d in dts[:order]):
        raise ParameterError(f"order {order} needs {order} positive step sizes")
    dt = dts[0]
    # nodes in units of dt relative to t_{n+1} = 0: 0, -1, -(1 + dts[1]/dt), ...
    nodes = [0.0]
    acc = 0.0
    for d in dts[:order]:
        acc += d / dt
        nodes.append(-acc)
    nodes = np.array(nodes)
    V = np.vander(nodes, order + 1, increasing=True).T      # V[m, j] = nodes_j^m
    rhs = np.zeros(order + 1)
    rhs[1] = 1.0
    bdf = np.linalg.solve(V, rhs)
    Ve = np.vander(nodes[1:], order, increasing=True).T
    re = np.zeros(order)
    re[0] = 1.0
    ext = np.linalg.solve(Ve, re)
    if order == 1:
        bdf = np.array([1.0, -1.0])
        ext = np.array([1.0])
    return TimeScheme(order, dt, bdf, ext)


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class CaseConfig:
    """Nondimensional case definition (chord, freestream speed and density are 1)."""

    re: float = 1000.0
    aoa: float = 0.0
    model: str = "laminar"
    cfl: float = 0.5
    order: int = 3
    t_final: float = 1.0
    max_steps: int | None = None
    dt: float | None = None          # fixed step; None means CFL-adaptive
    dt_max: float = 0.1
    dt_initial: float = 1e-3
    filter_modes: int = 1
    chi: float = 0.0
    k_inf: float = 1e-6
    tau_inf: float | None = None
    mut_ratio_inf: float = 1e-2
    p_tol: float = 1e-8
    v_tol: float = 1e-10
    s_tol: float = 1e-10
    maxit: int = 500
    restart: int = 30
    preconditioner: str = "two-level"   # or "direct" (sparse LU, stretched meshes)
    dealias: bool = False
    body_force: tuple = (0.0, 0.0)
    output_every: int = 0
    checkpoint_every: int = 0
    output_dir: str = "output"
    name: str = "case"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.re > 0:
            raise ParameterError("Reynolds number must be positive")
        if not 0.0 <= self.aoa <= 180.0:
            raise ParameterError("angle of attack must lie in [0, 180] degrees")
        if not self.cfl > 0:
            raise ParameterError("target CFL must be positive")
        if self.order not in (1, 2, 3):
            raise ParameterError("scheme order must be 1, 2 or 3")
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ParameterError(f"unknown preconditioner {self.preconditioner!r}; "
                                 f"choose from {', '.join(PRECONDITIONERS)}")
        if self.chi < 0:
            raise ParameterError("chi must be nonnegative")
        if self.k_inf < 0:
            raise ParameterError("k_inf must be nonnegative")

    @property
    def nu(self):
        return 1.0 / self.re

    @property
    def direction(self):
        a = math.radians(self.aoa)
        return math.cos(a), math.sin(a)

    @property
    def tau_freestream(self):
        """``tau_inf`` or, by default, the value giving ``mu_t/mu = mut_ratio_inf``."""
        if self.tau_inf is not None:
            return float(self.tau_inf)
        if self.k_inf == 0:
            return 0.0
        return self.mut_ratio_inf * self.nu / self.k_inf


@dataclass
class SimulationState:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    k: np.ndarray
    tau: np.ndarray
    mu_t: np.ndarray
    t: float = 0.0
    step: int = 0
    model: str = "laminar"
    # histories, newest first: previous velocity/scalar levels and explicit terms
    u_history: tuple = ()
    f_history: tuple = ()
    dt_history: tuple = ()
    diagnostics: dict = field(default_factory=dict)
    counters: dict = field(default_factory=lambda: {"k_clips": 0, "tau_clips": 0,
                                                     "tau_floor": 0, "ddes_guard": 0})

    def copy(self):
        return replace(self, u=self.u.copy(), v=self.v.copy(), p=self.p.copy(), k=self.k.copy(),
                       tau=self.tau.copy(), mu_t=self.mu_t.copy(),
                       diagnostics=dict(self.diagnostics), counters=dict(self.counters))


FlowState = SimulationState


@dataclass
class StepReport:
    dt: float
    order: int
    solves: dict
    divergence: float
    cfl: float


# ---------------------------------------------------------------------------
# discrete divergence (pressure space P_{N-2} on Gauss points)
# ---------------------------------------------------------------------------

class DivergenceOperator:
    """Weak divergence ``(q, div u)`` tested against degree N-2 Lagrange polynomials."""

    def __init__(self, space, mask_u, mask_v):
        N = space.basis.order
        if N < 2:
            raise ParameterError("divergence projection needs N >= 2")
        self.space = space
        pts, wts = npleg.leggauss(N - 1)
        J = space.basis.interpolation_matrix(pts)
        self.J = J
        self.JT = np.ascontiguousarray(J.T)
        D = space.D
        mesh = space.mesh
        g = lambda f: J @ f @ self.JT  # noqa: E731
        xr, xs = g(D @ mesh.x), g(mesh.x @ D.T)
        yr, ys = g(D @ mesh.y), g(mesh.y @ D.T)
        W = wts[:, None] * wts[None, :]
        # J*rx = ys, J*sx = -yr, J*ry = -xs, J*sy = xr
        self.cxr, self.cxs = W * ys, -W * yr
        self.cyr, self.cys = -W * xs, W * xr
        self.minv_u = mask_u / space.mass_global
        self.minv_v = mask_v / space.mass_global
        self.diag = self._diagonal()

    def _ref(self, f):
        sp = self.space
        return self.J @ (sp.D @ f) @ self.JT, self.J @ (f @ sp.DT) @ self.JT

    def parts(self, u, v):
        ur, us = self._ref(u)
        vr, vs = self._ref(v)
        return self.cxr * ur + self.cxs * us, self.cyr * vr + self.cys * vs

    def apply(self, u, v):
        dx, dy = self.parts(u, v)
        return dx + dy

    def transpose(self, q):
        """Global vectors ``(D_x^T q, D_y^T q)``."""
        sp = self.space
        J, JT = self.J, self.JT

        def back(cr, cs):
            return sp.DT @ (JT @ (cr * q) @ J) + (JT @ (cs * q) @ J) @ sp.D

        return sp.gather(back(self.cxr, self.cxs)), sp.gather(back(self.cyr, self.cys))

    def schur(self, q):
        gx, gy = self.transpose(q.reshape(self.cxr.shape))
        sp = self.space
        return self.apply(sp.scatter(self.minv_u * gx), sp.scatter(self.minv_v * gy)).ravel()

    def _diagonal(self):
        sp = self.space
        JD = self.J @ sp.D
        T1 = np.einsum("ga,hb->ghab", JD, self.J)
        T2 = np.einsum("ga,hb->ghab", self.J, JD)
        mu = self.minv_u[sp.ids]
        mv = self.minv_v[sp.ids]
        dx = self.cxr[..., None, None] * T1 + self.cxs[..., None, None] * T2
        diag = np.einsum("eghab,eab->egh", dx**2, mu)
        dy = self.cyr[..., None, None] * T1 + self.cys[..., None, None] * T2
        diag += np.einsum("eghab,eab->egh", dy**2, mv)
        return diag.ravel()

    def assemble_schur(self):
        """Sparse ``D_x M^-1 D_x^T + D_y M^-1 D_y^T`` on the Gauss-point unknowns."""
        sp = self.space
        E = sp.mesh.n_elements
        nq2 = sp.basis.nq ** 2
        ng = self.cxr[0].size
        bx = np.empty((E, ng, nq2))
        by = np.empty((E, ng, nq2))
        zero = np.zeros(sp.shape)
        for a in range(nq2):
            f = np.zeros(sp.shape)
            f.reshape(E, -1)[:, a] = 1.0
            bx[:, :, a] = self.parts(f, zero)[0].reshape(E, -1)
            by[:, :, a] = self.parts(zero, f)[1].reshape(E, -1)
        rows = np.repeat(np.arange(E * ng).reshape(E, ng), nq2, axis=1).ravel()
        cols = np.repeat(sp.ids.reshape(E, 1, nq2), ng, axis=1).ravel()
        shape = (E * ng, sp.n_global)
        Dx = coo_matrix((bx.ravel(), (rows, cols)), shape=shape).tocsr()
        Dy = coo_matrix((by.ravel(), (rows, cols)), shape=shape).tocsr()
        return (Dx @ diags(self.minv_u) @ Dx.T + Dy @ diags(self.minv_v) @ Dy.T).tocsc()

    def scale(self, u, v):
        """Norm of the full weak velocity gradient, the yardstick for divergence."""
        ur, us = self._ref(u)
        vr, vs = self._ref(v)
        parts = (self.cxr * ur + self.cxs * us, self.cyr * ur + self.cys * us,
                 self.cxr * vr + self.cxs * vs, self.cyr * vr + self.cys * vs)
        return float(np.sqrt(sum(np.sum(p**2) for p in parts)))

    def residual(self, u, v):
        """``||D u|| / ||grad u||`` on Gauss points; zero for a vanishing gradient."""
        scale = self.scale(u, v)
        return 0.0 if scale == 0.0 else float(np.linalg.norm(self.apply(u, v)) / scale)


# ---------------------------------------------------------------------------
# problem setup: boundary classification, masks and static fields
# ---------------------------------------------------------------------------

class FlowProblem:
    """Static discretisation data for a case: operators, masks, wall data."""

    def __init__(self, mesh, config: CaseConfig, velocity_bc=None, forcing=None, space=None):
        self.mesh = mesh
        self.config = config
        self.space = space or SEMSpace(mesh)
        self.velocity_bc = velocity_bc
        self.forcing = forcing
        sp = self.space
        ng = sp.n_global
        self.xg = sp.to_global(mesh.x)
        self.yg = sp.to_global(mesh.y)
        self.face_kind = self._classify_faces()
        self.fix_u = np.zeros(ng, bool)
        self.fix_v = np.zeros(ng, bool)
        self.fix_s = np.zeros(ng, bool)
        self.fix_p = np.zeros(ng, bool)
        self.wall_nodes = np.zeros(ng, bool)
        self.inflow_nodes = np.zeros(ng, bool)
        for (e, f), kind in self.face_kind.items():
            gid = mesh.face_global_ids(e, f)
            if kind in ("wall", "inflow", "dirichlet"):
                self.fix_u[gid] = self.fix_v[gid] = self.fix_s[gid] = True
                if kind == "wall":
                    self.wall_nodes[gid] = True
                else:
                    self.inflow_nodes[gid] = True
            elif kind == "symmetry_x":
                self.fix_u[gid] = True
            elif kind == "symmetry_y":
                self.fix_v[gid] = True
            elif kind == "outflow":
                self.fix_p[gid] = True
        # walls take precedence over inflow at shared corners
        self.inflow_nodes &= ~self.wall_nodes
        self.mask_u = (~self.fix_u).astype(float)
        self.mask_v = (~self.fix_v).astype(float)
        self.mask_s = (~self.fix_s).astype(float)
        self.mask_p = (~self.fix_p).astype(float)
        self.pressure_singular = not self.fix_p.any()
        self.divergence = DivergenceOperator(sp, self.mask_u, self.mask_v)
        if config.preconditioner == "direct":
            self.p_precond = DirectPreconditioner(
                assemble_helmholtz(sp, mask=self.mask_p), singular=self.pressure_singular)
            self.div_precond = DirectPreconditioner(self.divergence.assemble_schur(),
                                                    singular=self.pressure_singular)
        else:
            self.p_precond = TwoLevelPreconditioner(sp, mask=self.mask_p,
                                                    singular=self.pressure_singular)
            self.div_precond = jacobi(self.divergence.diag)
        self.filter = make_filter(mesh.order, config.filter_modes, config.chi)
        self.turbulent = config.model in TURBULENT_MODELS
        self.wall_distance = None
        self.hmax = None
        if self.turbulent:
            self.wall_distance = compute_wall_distance(mesh, sp.basis)
            self.hmax = np.broadcast_to(compute_hmax(mesh, sp.basis)[:, None, None],
                                        sp.shape).copy()
        self.wall_faces = [(bf.element, bf.face) for bf in mesh.faces_with_tag("wall")]
        self.closed_walls = bool(self.wall_faces) and all(
            ch.closed for ch in boundary_chains(mesh, ("wall",)))
        self.flux_faces = [(e, f) for (e, f), kind in self.face_kind.items()
                           if kind in ("wall", "inflow", "dirichlet")]

    def _classify_faces(self):
        geom = self.space.geom
        dx, dy = self.config.direction
        kinds = {}
        for bf in self.mesh.boundary_faces:
            e, f, tag = bf
            n = geom.normals[e, f]
            if tag == "wall":
                kinds[(e, f)] = "wall"
            elif tag == "dirichlet":
                kinds[(e, f)] = "dirichlet"
            elif tag == "outflow":
                kinds[(e, f)] = "outflow"
            elif tag == "inflow_outflow":
                w = geom.face_weights[e, f]
                nbar = (w[:, None] * n).sum(axis=0)
                kinds[(e, f)] = "inflow" if nbar[0] * dx + nbar[1] * dy < 0 else "outflow"
            elif tag == "symmetry":
                if np.all(np.abs(n[:, 0]) > 1 - 1e-8):
                    kinds[(e, f)] = "symmetry_x"
                elif np.all(np.abs(n[:, 1]) > 1 - 1e-8):
                    kinds[(e, f)] = "symmetry_y"
                else:
                    raise ConfigurationError(
                        f"symmetry face ({e}, {f}) is not axis-aligned; only x- or y-normal "
                        "symmetry planes are supported")
            else:
                raise ConfigurationError(f"unresolved boundary tag {tag!r} on face ({e}, {f})")
        return kinds

    # -- boundary values --------------------------------------------------
    def velocity_values(self, t):
        """Global Dirichlet velocity values (zero where not prescribed)."""
        ub = np.zeros(self.space.n_global)
        vb = np.zeros(self.space.n_global)
        dx, dy = self.config.direction
        inflow = self.inflow_nodes
        if self.velocity_bc is not None:
            bu, bv = self.velocity_bc(self.xg[inflow], self.yg[inflow], t)
            ub[inflow] = bu
            vb[inflow] = bv
        else:
            ub[inflow] = dx
            vb[inflow] = dy
        return ub * self.fix_u, vb * self.fix_v

    def scalar_values(self):
        cfg = self.config
        kb = np.where(self.inflow_nodes, cfg.k_inf, 0.0)
        tb = np.where(self.inflow_nodes, cfg.tau_freestream, 0.0)
        return kb, tb


# ---------------------------------------------------------------------------
# boundary conditions, CFL, initial state
# ---------------------------------------------------------------------------

def apply_boundary_conditions(state, config, problem, t=None):
    """Impose Dirichlet values of u, v, k, tau at boundary nodes (in place)."""
    sp = problem.space
    t = state.t if t is None else t
    ub, vb = problem.velocity_values(t)
    kb, tb = problem.scalar_values()

    def impose(f, fixed, values):
        g = sp.to_global(f)
        g[fixed] = values[fixed]
        return sp.scatter(g)

    state.u = impose(state.u, problem.fix_u, ub)
    state.v = impose(state.v, problem.fix_v, vb)
    state.k = impose(state.k, problem.fix_s, kb)
    state.tau = impose(state.tau, problem.fix_s, tb)
    return state


def _reference_spacing(nodes):
    gaps = np.diff(nodes)
    left = np.concatenate([[np.inf], gaps])
    right = np.concatenate([gaps, [np.inf]])
    return np.minimum(left, right)


def cfl_estimate(state, mesh_or_problem, basis=None, dt=None, target=0.5, dt_max=0.1):
    """Return ``(CFL, dt_suggestion)`` for the current velocity and step size."""
    space = mesh_or_problem.space if hasattr(mesh_or_problem, "space") else \
        SEMSpace(mesh_or_problem, basis)
    g = space.geom
    dr = _reference_spacing(space.basis.nodes)
    ur = np.abs(g.rx * state.u + g.ry * state.v) / dr[None, :, None]
    us = np.abs(g.sx * state.u + g.sy * state.v) / dr[None, None, :]
    rate = float(np.max(ur + us))
    dt = dt if dt is not None else (state.dt_history[0] if state.dt_history else 1.0)
    cfl = dt * rate
    suggestion = dt_max if rate == 0.0 else min(dt_max, target / rate)
    return cfl, suggestion


def initial_state(problem, velocity=None, pressure=None):
    """Freestream (or user-given) initial fields with boundary values imposed."""
    cfg = problem.config
    sp = problem.space
    mesh = problem.mesh
    if velocity is None:
        dx, dy = cfg.direction
        u = np.full(sp.shape, dx)
        v = np.full(sp.shape, dy)
    else:
        u, v = velocity(mesh.x, mesh.y, 0.0)
        u = np.array(u, dtype=float) * np.ones(sp.shape)
        v = np.array(v, dtype=float) * np.ones(sp.shape)
    p = np.zeros(sp.shape) if pressure is None else np.asarray(pressure(mesh.x, mesh.y, 0.0),
                                                                 dtype=float) * np.ones(sp.shape)
    if problem.turbulent:
        k = np.full(sp.shape, cfg.k_inf)
        tau = np.full(sp.shape, cfg.tau_freestream)
    else:
        k = np.zeros(sp.shape)
        tau = np.zeros(sp.shape)
    state = SimulationState(u=u, v=v, p=p, k=k, tau=tau, mu_t=np.zeros(sp.shape), model=cfg.model)
    apply_boundary_conditions(state, cfg, problem)
    if problem.turbulent:
        refresh_closure(state, problem)
    return state


# ---------------------------------------------------------------------------
# closure fields
# ---------------------------------------------------------------------------

def velocity_invariants(space, u, v):
    """Strain-rate magnitude ``sqrt(2 S_ij S_ij)``, vorticity and its magnitude."""
    ux, uy = space.gradient(u)
    vx, vy = space.gradient(v)
    sxy = 0.5 * (uy + vx)
    S = np.sqrt(2.0 * (ux**2 + vy**2 + 2.0 * sxy**2))
    w = vx - uy
    return S, w, np.abs(w), (ux, uy, vx, vy)


def closure_fields(problem, u, v, k, tau):
    """Evaluate the k-tau closure (and DDES scales) at every GLL point.

    Wall points (d = 0) take the limiting values F1 = F2 = 1, f_d = 0 and
    mu_t = 0.
    """
    cfg = problem.config
    sp = problem.space
    nu = cfg.nu
    d = problem.wall_distance
    off = d > 0
    k = np.maximum(k, 0.0)
    tau_c = np.maximum(tau, 0.0)
    tau_f = np.maximum(tau_c, turb.TAU_FLOOR)
    floor_events = int(np.count_nonzero((tau_c < turb.TAU_FLOOR) & off))
    S, _, Om, _ = velocity_invariants(sp, u, v)
    gk = np.stack(sp.gradient(k), axis=-1)
    gt = np.stack(sp.gradient(tau_c), axis=-1)
    gst = np.stack(sp.gradient(np.sqrt(tau_c)), axis=-1)
    shape = sp.shape
    F1 = np.ones(shape)
    F2 = np.ones(shape)
    s = turb.LocalClosureState(k=k[off], tau=tau_f[off], grad_k=gk[off], grad_tau=gt[off],
                               S=S[off], Omega=Om[off], d=d[off], nu=nu,
                               grad_sqrt_tau=gst[off])
    ev = turb.evaluate_ktau(s)
    F1[off] = ev.F1
    F2[off] = ev.F2
    mu_t = np.zeros(shape)
    mu_t[off] = ev.mu_t
    out = dict(S=S, Omega=Om, F1=F1, F2=F2, mu_t=mu_t, tau_floor_events=floor_events)
    alpha, beta, sk, sw, _ = turb.blend_constants(F1)
    out["gamma_k"] = turb.effective_diffusivity(nu, mu_t, sk)
    out["gamma_w"] = turb.effective_diffusivity(nu, mu_t, sw)
    P = turb.production(mu_t, S, k, tau_f)
    out["P_k"] = P
    benton = turb.benton_factor(nu, mu_t)
    out["benton"] = benton
    # tau-equation parts with the Benton factor divided out (it scales the whole
    # right-hand side and is carried by the weighted mass instead)
    src = np.zeros(shape)
    src[off] = ev.parts["production"] + ev.parts["destruction"] + ev.parts["cross_diffusion"]
    out["tau_source"] = src
    stau = np.zeros(shape)
    stau[off] = -ev.parts["s_tau"]
    out["tau_reaction"] = stau / tau_f
    c = turb.SstConstants()
    if cfg.model == "ddes_ktau":
        f_d = np.zeros(shape)
        fd, rd = turb.delay_function(mu_t[off], nu, d[off], S[off], Om[off])
        f_d[off] = fd
        dd = turb.ddes_length_scale(k, tau_c, F1, f_d, problem.hmax)
        out["f_d"] = f_d
        out["l_ddes"] = dd.l_ddes
        with np.errstate(divide="ignore", invalid="ignore"):
            out["l_ratio"] = np.where(dd.l_rans > 0, dd.l_ddes / np.where(dd.l_rans > 0, dd.l_rans, 1), 1.0)
            kcoef = np.where(k > 0, dd.destruction / np.where(k > 0, k, 1.0), c.beta_star / tau_f)
        out["k_reaction"] = kcoef
        out["ddes_guard_events"] = dd.guard_events
    else:
        out["f_d"] = np.zeros(shape)
        out["l_ratio"] = np.ones(shape)
        out["k_reaction"] = c.beta_star / tau_f
        out["ddes_guard_events"] = 0
    return out


def refresh_closure(state, problem):
    cl = closure_fields(problem, state.u, state.v, state.k, state.tau)
    state.mu_t = cl["mu_t"]
    state.diagnostics.update(F1=cl["F1"], f_d=cl["f_d"], l_ratio=cl["l_ratio"],
                             mut_ratio=cl["mu_t"] / problem.config.nu)
    return cl


# ---------------------------------------------------------------------------
# one time step
# ---------------------------------------------------------------------------

def explicit_terms(state, problem):
    """Explicit momentum terms at the current level (local arrays)."""
    cfg = problem.config
    sp = problem.space
    u, v = state.u, state.v
    fu = -sp.convect(u, v, u, cfg.dealias)
    fv = -sp.convect(u, v, v, cfg.dealias)
    bx, by = cfg.body_force
    if bx or by:
        fu = fu + bx
        fv = fv + by
    if problem.forcing is not None:
        gx, gy = problem.forcing(problem.mesh.x, problem.mesh.y, state.t)
        fu = fu + gx
        fv = fv + gy
    if problem.turbulent and np.any(state.mu_t):
        # (grad nu_t) . (grad u)^T, the part of div(2 nu_t S) not in the Laplacian
        nx_, ny_ = sp.gradient(state.mu_t)
        ux, uy = sp.gradient(u)
        vx, vy = sp.gradient(v)
        fu = fu + nx_ * ux + ny_ * vx
        fv = fv + nx_ * uy + ny_ * vy
    if cfg.model == "hpf_les" and cfg.chi > 0:
        basis = sp.basis
        fu = fu - cfg.chi * highpass_apply(u, problem.filter, basis)
        fv = fv - cfg.chi * highpass_apply(v, problem.filter, basis)
    return fu, fv


def scalar_advection(state, problem):
    sp = problem.space
    dea = problem.config.dealias
    return (-sp.convect(state.u, state.v, state.k, dea),
            -sp.convect(state.u, state.v, state.tau, dea))


def _combine(weights, arrays):
    out = weights[0] * arrays[0]
    for w, a in zip(weights[1:], arrays[1:]):
        out = out + w * a
    return out


def _check(report, name, step):
    if not report.converged:
        raise StepError(f"{name} solve did not converge at step {step}: "
                        f"{report.iterations} iterations, residual {report.final_residual:.3e}",
                        report=report)


def _helmholtz_solve(sp, rhs_local, diffusivity, reaction, mask, fixed_values, x0_local, tol,
                     maxit, name, step):
    """Solve ``(reaction M_w + K) x = b`` with Dirichlet lifting; returns local field."""
    B = sp.geom.mass

    def local_op(f):
        out = sp.helmholtz_apply(f, diffusivity, 0.0)
        return out + (reaction * B) * f

    def apply(x):
        return mask * sp.gather(local_op(sp.scatter(mask * x)))

    lift = sp.gather(local_op(sp.scatter(fixed_values)))
    b = mask * (sp.gather(rhs_local) - lift)
    diag = sp.gather(sp.helmholtz_diagonal(diffusivity, 0.0) + reaction * B)
    x0 = mask * sp.to_global(x0_local)
    x, rep = pcg(apply, b, jacobi(diag, mask), tol=tol, maxit=maxit, x0=x0)
    _check(rep, name, step)
    return sp.scatter(mask * x + fixed_values), rep


def advance_timestep(state, config, problem, dt):
    """Advance ``state`` by ``dt``; returns ``(new_state, StepReport)``."""
    cfg = config
    sp = problem.space
    B = sp.geom.mass
    nu = cfg.nu
    step = state.step + 1
    order = min(cfg.order, state.step + 1)
    scheme = bdfext_coefficients(order, (dt,) + tuple(state.dt_history))
    c, e = scheme.bdf, scheme.ext
    t_new = state.t + dt
    solves = {}

    # levels n, n-1, ... (newest first)
    levels = [(state.u, state.v, state.k, state.tau)] + list(state.u_history)
    f_now = explicit_terms(state, problem)
    if problem.turbulent:
        f_now = f_now + scalar_advection(state, problem)
    f_levels = [f_now] + list(state.f_history)

    def hist(idx):
        return -_combine(c[1:], [lv[idx] for lv in levels[:order]]) / dt

    def ext(idx):
        return _combine(e, [fl[idx] for fl in f_levels[:order]])

    ru = hist(0) + ext(0)
    rv = hist(1) + ext(1)
    b0 = c[0] / dt

    # -- pressure ----------------------------------------------------------
    us = _combine(e, [lv[0] for lv in levels[:order]])
    vs = _combine(e, [lv[1] for lv in levels[:order]])
    nu_eff = nu + state.mu_t
    _, w, _, _ = velocity_invariants(sp, us, vs)
    w = sp.average(w)
    wx, wy = sp.gradient(w)
    px = ru - nu_eff * wy
    py = rv + nu_eff * wx
    ub, vb = problem.velocity_values(t_new)
    flux = np.zeros(sp.n_global)
    geom = sp.geom
    for ef in problem.flux_faces:
        gid = problem.mesh.face_global_ids(*ef)
        n = geom.normals[ef]
        np.add.at(flux, gid, geom.face_weights[ef] * (ub[gid] * n[:, 0] + vb[gid] * n[:, 1]))
    mp = problem.mask_p
    bp = mp * (sp.gather(sp.weak_gradient_transpose(px, py)) - b0 * flux)

    def apply_p(x):
        return mp * sp.gather(sp.helmholtz_apply(sp.scatter(mp * x)))

    p0 = mp * sp.to_global(state.p)
    pg, rep = gmres(apply_p, bp, problem.p_precond, tol=cfg.p_tol, restart=cfg.restart,
                    maxit=cfg.maxit, x0=p0, project_mean=problem.pressure_singular)
    _check(rep, "pressure", step)
    solves["p"] = rep
    p = sp.scatter(mp * pg)
    gpx, gpy = sp.gradient(p)

    # -- velocity ----------------------------------------------------------
    u, rep = _helmholtz_solve(sp, B * (ru - gpx), nu_eff, b0, problem.mask_u, ub, state.u,
                              cfg.v_tol, cfg.maxit, "u-velocity", step)
    solves["u"] = rep
    v, rep = _helmholtz_solve(sp, B * (rv - gpy), nu_eff, b0, problem.mask_v, vb, state.v,
                              cfg.v_tol, cfg.maxit, "v-velocity", step)
    solves["v"] = rep

    # -- discrete divergence projection ----------------------------------
    dv = problem.divergence
    rhs = dv.apply(u, v).ravel()
    # stop once the Euclidean divergence is below p_tol times the velocity-gradient
    # scale; ||r|| <= sqrt(max diag) ||r||_P converts that bound to the Jacobi norm
    atol = cfg.p_tol * dv.scale(u, v) / math.sqrt(dv.diag.max())
    q, rep = pcg(dv.schur, rhs, problem.div_precond, tol=cfg.p_tol, maxit=cfg.maxit,
                 project_mean=problem.pressure_singular, atol=atol)
    _check(rep, "divergence projection", step)
    solves["div"] = rep
    gx, gy = dv.transpose(q.reshape(dv.cxr.shape))
    u = u - sp.scatter(dv.minv_u * gx)
    v = v - sp.scatter(dv.minv_v * gy)
    div_res = dv.residual(u, v)

    new = SimulationState(u=u, v=v, p=p, k=state.k, tau=state.tau, mu_t=state.mu_t, t=t_new,
                          step=step, model=state.model, diagnostics=dict(state.diagnostics),
                          counters=dict(state.counters))

    # -- turbulence --------------------------------------------------------
    if problem.turbulent:
        cl = closure_fields(problem, u, v, state.k, state.tau)
        new.counters["tau_floor"] += cl["tau_floor_events"]
        new.counters["ddes_guard"] += cl["ddes_guard_events"]
        kb, tb = problem.scalar_values()
        rk = hist(2) + ext(2) + cl["P_k"]
        k, rep = _helmholtz_solve(sp, B * rk, cl["gamma_k"], b0 + cl["k_reaction"],
                                  problem.mask_s, kb * problem.fix_s, state.k, cfg.s_tol,
                                  cfg.maxit, "k", step)
        solves["k"] = rep
        fb = np.maximum(cl["benton"], BENTON_MASS_FLOOR)
        rt = (hist(3) + ext(3)) / fb + cl["tau_source"]
        tau, rep = _helmholtz_solve(sp, B * rt, cl["gamma_w"], b0 / fb + cl["tau_reaction"],
                                    problem.mask_s, tb * problem.fix_s, state.tau, cfg.s_tol,
                                    cfg.maxit, "tau", step)
        solves["tau"] = rep
        new.counters["k_clips"] += int(np.count_nonzero(k < 0))
        new.counters["tau_clips"] += int(np.count_nonzero(tau < 0))
        new.k = np.maximum(k, 0.0)
        new.tau = np.maximum(tau, 0.0)
        refresh_closure(new, problem)

    for name, arr in (("u", u), ("v", v), ("p", p), ("k", new.k), ("tau", new.tau)):
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"non-finite {name} field at step {step} (t = {t_new:.6g})",
                                  step=step)

    depth = cfg.order - 1
    new.u_history = tuple(levels[:depth])
    new.f_history = tuple(f_levels[:depth])
    new.dt_history = ((dt,) + tuple(state.dt_history))[:cfg.order]
    cfl, _ = cfl_estimate(new, problem, dt=dt, target=cfg.cfl, dt_max=cfg.dt_max)
    return new, StepReport(dt, order, solves, div_res, cfl)


def seed_history(state, problem, exact, dt, order=None):
    """Fill BDF/EXT histories from an exact solution ``exact(x, y, t) -> (u, v)``.

    Lets a run start at full order; used for temporal convergence studies.
    """
    cfg = problem.config
    order = order or cfg.order
    mesh = problem.mesh
    levels, forces = [], []
    for j in range(1, order):
        tj = state.t - j * dt
        u, v = exact(mesh.x, mesh.y, tj)
        s = SimulationState(u=u * np.ones(mesh.x.shape), v=v * np.ones(mesh.x.shape), p=state.p,
                            k=state.k, tau=state.tau, mu_t=state.mu_t, t=tj, model=state.model)
        levels.append((s.u, s.v, s.k, s.tau))
        f = explicit_terms(s, problem)
        if problem.turbulent:
            f = f + scalar_advection(s, problem)
        forces.append(f)
    state.u_history = tuple(levels)
    state.f_history = tuple(forces)
    state.dt_history = (dt,) * (order - 1)
    state.step = max(state.step, order - 1)
    return state


# ---------------------------------------------------------------------------
# time loop
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    state: SimulationState
    rows: list
    solver_log: list
    summary: dict
    outputs: list


def choose_dt(state, problem):
    cfg = problem.config
    if cfg.dt is not None:
        return cfg.dt
    if not state.dt_history:
        cfl, sug = cfl_estimate(state, problem, dt=1.0, target=cfg.cfl, dt_max=cfg.dt_max)
        return min(sug, cfg.dt_initial) if cfl > 0 else cfg.dt_initial
    prev = state.dt_history[0]
    _, sug = cfl_estimate(state, problem, dt=prev, target=cfg.cfl, dt_max=cfg.dt_max)
    # smooth growth keeps the variable-step BDF weights well conditioned
    return min(sug, 1.2 * prev)


def run_case(config, mesh=None, problem=None, state=None, velocity_bc=None, forcing=None,
             initial_velocity=None, writer=None, callback=None):
    """Time-march a case and collect its time series, solver log and summary.

    ``writer`` (see :mod:`semflow.output`) receives field dumps and
    checkpoints; without it nothing is written to disk.
    """
    from .postproc import force_coefficients

    if problem is None:
        if mesh is None:
            raise ConfigurationError("run_case needs a mesh or a prepared problem")
        problem = FlowProblem(mesh, config, velocity_bc=velocity_bc, forcing=forcing)
    if state is None:
        state = initial_state(problem, velocity=initial_velocity)
    rows, solver_log = [], []
    t0 = time.perf_counter()
    iters = {}
    max_div = 0.0
    eps = 1e-12 * max(1.0, config.t_final)
    n_taken = 0
    while state.t < config.t_final - eps:
        if config.max_steps is not None and n_taken >= config.max_steps:
            break
        dt = min(choose_dt(state, problem), config.t_final - state.t)
        try:
            new, rep = advance_timestep(state, config, problem, dt)
        except (StepError, DivergenceError):
            if writer is not None:
                writer.checkpoint(state, tag="last_valid")
            raise
        state = new
        n_taken += 1
        max_div = max(max_div, rep.divergence)
        if problem.closed_walls:
            fc = force_coefficients(problem.space, state.p, state.u, state.v, config.nu,
                                    problem.wall_faces, config.aoa, chord=problem.mesh.chord)
            cl, cd = fc.cl, fc.cd
        else:
            cl = cd = float("nan")
        row = dict(step=state.step, t=state.t, dt=dt, cl=cl, cd=cd, cfl=rep.cfl,
                   divergence=rep.divergence)
        for name, sr in rep.solves.items():
            row[f"it_{name}"] = sr.iterations
            iters.setdefault(name, []).append(sr.iterations)
            solver_log.append(dict(step=state.step, field=name, iterations=sr.iterations,
                                   initial_residual=sr.initial_residual,
                                   final_residual=sr.final_residual))
        rows.append(row)
        if writer is not None:
            if config.output_every and state.step % config.output_every == 0:
                writer.fields(state, problem)
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                writer.checkpoint(state)
        if callback is not None:
            callback(state, rep)
    wall = time.perf_counter() - t0
    summary = dict(name=config.name, model=config.model, re=config.re, aoa=config.aoa,
                   steps=n_taken, t_final=state.t, wall_time=wall,
                   max_divergence=max_div,
                   mean_iterations={k: float(np.mean(v)) for k, v in iters.items()},
                   k_inf=config.k_inf, tau_inf=config.tau_freestream,
                   counters=dict(state.counters))
    outputs = []
    if writer is not None:
        outputs = writer.finish(state, problem, rows, solver_log, summary)
    return RunResult(state, rows, solver_log, summary, outputs)
