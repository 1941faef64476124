"""Surface coefficients, integrated forces, flow diagnostics and time-series
statistics (running averages, convergence time, PSD, histograms)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import GeometryError, ParameterError
from .mesh import boundary_chains, face_node_indices

# ---------------------------------------------------------------------------
# surface quantities
# ---------------------------------------------------------------------------


@dataclass
class SurfaceDistribution:
    """Wall stations ordered along each wall chain (fluid on the left)."""

    s: np.ndarray          # arc length / chord
    x: np.ndarray
    y: np.ndarray
    cp: np.ndarray
    cf: np.ndarray
    tau_w: np.ndarray
    dn_plus: np.ndarray
    chain: np.ndarray      # chain index per station


@dataclass
class ForceCoefficients:
    cl: float
    cd: float
    lift: float
    drag: float
    force: tuple = (0.0, 0.0)
    pressure_force: tuple = (0.0, 0.0)
    viscous_force: tuple = (0.0, 0.0)


def _wall_faces(mesh, faces):
    if faces is None:
        return [(bf.element, bf.face) for bf in mesh.faces_with_tag("wall")]
    return list(faces)


def _interior_index(N, face, ii, jj):
    """Index of the first GLL line off the face, for wall-normal spacing."""
    if face == 0:
        return ii, jj + 1
    if face == 1:
        return ii - 1, jj
    if face == 2:
        return ii, jj - 1
    return ii + 1, jj


def _face_traction(space, p, u, v, nu, e, f, grads):
    """Pressure and viscous parts of ``sigma . n_face`` with ``n_face`` leaving the fluid."""
    N = space.basis.order
    ii, jj = face_node_indices(N, f)
    ux, uy, vx, vy = (g[e, ii, jj] for g in grads)
    n = space.geom.normals[e, f]
    pf = p[e, ii, jj]
    sxx, syy, sxy = ux, vy, 0.5 * (uy + vx)
    visc_x = 2 * nu * (sxx * n[:, 0] + sxy * n[:, 1])
    visc_y = 2 * nu * (sxy * n[:, 0] + syy * n[:, 1])
    return pf, n, visc_x, visc_y, (ii, jj)


def _velocity_gradients(space, u, v):
    ux, uy = space.gradient(u)
    vx, vy = space.gradient(v)
    return ux, uy, vx, vy


def force_coefficients(space, p, u, v, nu, faces=None, aoa=0.0, chord=1.0, rho=1.0, u_ref=1.0,
                       require_closed=True):
    """Lift and drag on the body bounded by ``faces`` (default: all wall faces).

    The force on the body is ``sum (p n - 2 mu S n) ds`` with ``n`` the face
    normal leaving the fluid; drag is its component along the freestream
    direction and lift the component normal to it.
    """
    mesh = space.mesh
    faces = _wall_faces(mesh, faces)
    if require_closed:
        fset = set(faces)
        tags = {bf.tag for bf in mesh.boundary_faces if (bf.element, bf.face) in fset}
        chains = [ch for ch in boundary_chains(mesh, tuple(tags)) if set(ch.faces) <= fset]
        if not chains or not all(ch.closed for ch in chains):
            raise GeometryError("force integration needs a closed wall contour")
    grads = _velocity_gradients(space, u, v)
    fp = np.zeros(2)
    fv = np.zeros(2)
    mu = rho * nu
    for e, f in faces:
        pf, n, vx_, vy_, _ = _face_traction(space, p, u, v, mu, e, f, grads)
        w = space.geom.face_weights[e, f]
        fp += np.array([np.sum(w * pf * n[:, 0]), np.sum(w * pf * n[:, 1])])
        fv -= np.array([np.sum(w * vx_), np.sum(w * vy_)])
    F = fp + fv
    a = math.radians(aoa)
    drag = F[0] * math.cos(a) + F[1] * math.sin(a)
    lift = -F[0] * math.sin(a) + F[1] * math.cos(a)
    q = 0.5 * rho * u_ref**2 * chord
    return ForceCoefficients(cl=lift / q, cd=drag / q, lift=lift, drag=drag, force=tuple(F),
                             pressure_force=tuple(fp), viscous_force=tuple(fv))


def surface_coefficients(space, p, u, v, nu, faces=None, p_o=0.0, rho=1.0, u_ref=1.0, chord=1.0):
    """Cp, Cf, wall shear and first-point spacing in viscous units along the walls.

    Shear is signed along the face tangent that keeps the fluid on its left;
    derivatives are the one-sided element derivatives at the wall.
    """
    mesh = space.mesh
    faces = set(_wall_faces(mesh, faces))
    N = space.basis.order
    grads = _velocity_gradients(space, u, v)
    q = 0.5 * rho * u_ref**2
    mu = rho * nu
    cols = {k: [] for k in ("s", "x", "y", "cp", "cf", "tau", "dn", "chain")}
    tags = {bf.tag for bf in mesh.boundary_faces if (bf.element, bf.face) in faces}
    for ci, ch in enumerate(boundary_chains(mesh, tuple(tags))):
        s0 = 0.0
        first = True
        for e, f in ch.faces:
            if (e, f) not in faces:
                continue
            pf, n, vx_, vy_, (ii, jj) = _face_traction(space, p, u, v, mu, e, f, grads)
            tx, ty = -n[:, 1], n[:, 0]
            # shear on the wall from the fluid side: mu (grad u + grad u^T) . n_in, tangential
            tau = -(vx_ * tx + vy_ * ty)
            xs = mesh.x[e, ii, jj]
            ys = mesh.y[e, ii, jj]
            seg = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xs), np.diff(ys)))])
            ai, aj = _interior_index(N, f, ii, jj)
            dn = np.hypot(mesh.x[e, ai, aj] - xs, mesh.y[e, ai, aj] - ys)
            dnp = np.sqrt(np.abs(tau) / rho) * dn / nu
            sl = slice(0 if first else 1, None)
            cols["s"].append((s0 + seg)[sl] / chord)
            cols["x"].append(xs[sl])
            cols["y"].append(ys[sl])
            cols["cp"].append(((pf - p_o) / q)[sl])
            cols["cf"].append((tau / q)[sl])
            cols["tau"].append(tau[sl])
            cols["dn"].append(dnp[sl])
            cols["chain"].append(np.full(len(xs[sl]), ci))
            s0 += seg[-1]
            first = False
    if not cols["s"]:
        raise GeometryError("no wall faces for surface coefficients")
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    return SurfaceDistribution(cat["s"], cat["x"], cat["y"], cat["cp"], cat["cf"], cat["tau"],
                               cat["dn"], cat["chain"].astype(int))


# ---------------------------------------------------------------------------
# flow diagnostics
# ---------------------------------------------------------------------------

def q_criterion(ux, uy, vx, vy):
    """``Q = (|Omega|^2 - |S|^2) / 2`` with Frobenius norms of the 2D tensors."""
    sxy = 0.5 * (uy + vx)
    oxy = 0.5 * (uy - vx)
    s2 = ux**2 + vy**2 + 2.0 * sxy**2
    o2 = 2.0 * oxy**2
    return 0.5 * (o2 - s2)


def streamwise_projection(u, v, aoa):
    a = math.radians(aoa)
    return u * math.cos(a) + v * math.sin(a)


# ---------------------------------------------------------------------------
# time-series statistics
# ---------------------------------------------------------------------------

@dataclass
class TimeSeriesRecord:
    t: np.ndarray
    values: np.ndarray
    quantity: str = "value"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ParameterError("times and values must be 1D arrays of equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ParameterError("sample times must be strictly increasing")


def running_average(t, values):
    """Time-weighted cumulative mean (trapezoidal rule); first entry is the first sample."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ParameterError("running average needs at least 2 samples")
    if np.any(np.diff(t) <= 0):
        raise ParameterError("sample times must be strictly increasing")
    area = np.concatenate([[0.0], np.cumsum(0.5 * (x[1:] + x[:-1]) * np.diff(t))])
    out = np.empty_like(x)
    out[0] = x[0]
    out[1:] = area[1:] / (t[1:] - t[0])
    return out


def convergence_time(t, values, band=0.002, reference=None):
    """Earliest time after which the running mean stays within ``band`` of the reference.

    The reference defaults to the final running mean. Returns ``None`` when the
    last running-mean value itself lies outside the band (not converged).
    """
    t = np.asarray(t, dtype=float)
    ra = running_average(t, values)
    ref = ra[-1] if reference is None else float(reference)
    inside = np.abs(ra - ref) <= band * abs(ref)
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    return float(t[0]) if outside.size == 0 else float(t[outside[-1] + 1])


def resample_uniform(t, values, n=None):
    """Linear interpolation onto a uniform grid at the mean sampling rate."""
    t = np.asarray(t, dtype=float)
    n = n or t.size
    tu = np.linspace(t[0], t[-1], n)
    return tu, np.interp(tu, t, values)


def is_uniform(t, rtol=1e-6):
    dt = np.diff(np.asarray(t, dtype=float))
    return dt.size > 0 and np.all(np.abs(dt - dt.mean()) <= rtol * abs(dt.mean()))


def psd(t, values, segments=2, resample=False, chord=1.0, u_ref=1.0):
    """One-sided Welch PSD with Hann windows and 50 % overlap.

    ``segments=2`` means windows of length ``n // 2`` (three windows with
    overlap). The mean is removed before windowing and its power restored in
    the zero bin so that ``sum(P) * df`` equals the mean square. The frequency
    axis is returned as a Strouhal number ``f c / U``.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(values, dtype=float)
    if x.size < 4:
        raise ParameterError("PSD needs at least 4 samples")
    if not is_uniform(t):
        if not resample:
            raise ParameterError("non-uniform sampling; resample first (resample=True)")
        t, x = resample_uniform(t, x)
    if segments < 2:
        raise ParameterError("PSD needs at least 2 segments")
    fs = 1.0 / (t[1] - t[0])
    nper = x.size // segments
    mean = x.mean()
    f, P = signal.welch(x - mean, fs=fs, window="hann", nperseg=nper, noverlap=nper // 2,
                        detrend=False, scaling="density", return_onesided=True)
    df = f[1] - f[0]
    P = P.copy()
    P[0] += mean**2 / df
    return f * chord / u_ref, P


def histogram(values, bins=32):
    """Equal-width histogram over ``[min, max]`` as percent occurrence."""
    x = np.asarray(values, dtype=float)
    if x.size < 1:
        raise ParameterError("histogram needs at least one sample")
    counts, edges = np.histogram(x, bins=bins)
    return edges, 100.0 * counts / x.size
