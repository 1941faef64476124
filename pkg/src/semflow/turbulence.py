"""Pointwise closure algebra for the k-tau SST model, its DDES extension and the
k-omega SST reference model.

Every function is vectorised over arbitrary array shapes. Gradients are arrays
whose last axis has length 2 (x and y components). Quantities are in
nondimensional units (chord, freestream speed, unit density).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

TAU_FLOOR = 1e-10
CD_FLOOR = 1e-10
RD_DENOMINATOR_FLOOR = 1e-10


@dataclass(frozen=True)
class SstConstants:
    alpha1: float = 5.0 / 9.0
    beta1: float = 0.075
    sigma_k1: float = 0.85
    sigma_w1: float = 0.5
    alpha2: float = 0.44
    beta2: float = 0.0828
    sigma_k2: float = 1.0
    sigma_w2: float = 0.856
    beta_star: float = 0.09
    a1: float = 0.31
    kappa: float = 0.41

    @property
    def c_mu(self):
        return self.beta_star


@dataclass(frozen=True)
class DdesConstants:
    c_des1: float = 0.78
    c_des2: float = 0.61
    c_d1: float = 20.0
    c_d2: float = 3.0


@dataclass
class LocalClosureState:
    """Local turbulence state; arrays broadcast against each other."""

    k: np.ndarray
    tau: np.ndarray
    grad_k: np.ndarray
    grad_tau: np.ndarray
    S: np.ndarray
    Omega: np.ndarray
    d: np.ndarray
    nu: float
    rho: float = 1.0
    grad_sqrt_tau: np.ndarray | None = None

    @property
    def mu(self):
        return self.rho * self.nu


@dataclass
class ClosureEvaluation:
    F1: np.ndarray
    F2: np.ndarray
    arg1: np.ndarray
    arg2: np.ndarray
    cd_kw: np.ndarray
    mu_t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma_k: np.ndarray
    sigma_w: np.ndarray
    P_k: np.ndarray
    gamma_k: np.ndarray
    gamma_w: np.ndarray
    benton: np.ndarray
    source_k: np.ndarray = None
    source_tau: np.ndarray = None
    parts: dict = field(default_factory=dict)


@dataclass
class DdesEvaluation:
    l_rans: np.ndarray
    l_les: np.ndarray
    l_ddes: np.ndarray
    c_des: np.ndarray
    f_d: np.ndarray
    r_d: np.ndarray
    destruction: np.ndarray
    guard_events: int = 0


def _dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def _check_positive_distance(d):
    if np.any(np.asarray(d) <= 0):
        raise DomainError("wall distance must be positive off the wall")


# ---------------------------------------------------------------------------
# k-tau SST
# ---------------------------------------------------------------------------

def blending_state(s: LocalClosureState, consts=SstConstants()):
    """``(F1, F2, arg1, arg2, CD_kw)`` in the tau form."""
    _check_positive_distance(s.d)
    c = consts
    k = np.maximum(s.k, 0.0)
    tau = np.asarray(s.tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau must be positive in the blending functions")
    d2 = np.asarray(s.d) ** 2
    sqk = np.sqrt(k)
    cd = np.maximum(-2.0 * c.sigma_w2 * _dot(s.grad_k, s.grad_tau) / tau, CD_FLOOR)
    visc = 500.0 * s.nu * tau / d2
    arg1 = np.minimum(np.maximum(tau * sqk / (c.beta_star * s.d), visc),
                      4.0 * c.sigma_w2 * k / (cd * d2))
    arg2 = np.maximum(2.0 * tau * sqk / (c.beta_star * s.d), visc)
    return np.tanh(arg1**4), np.tanh(arg2**2), arg1, arg2, cd


def eddy_viscosity(s: LocalClosureState, F2, consts=SstConstants()):
    """``mu_t = rho a1 k / max(a1/tau, F2 S)``; ``rho k tau`` when unlimited."""
    c = consts
    k = np.maximum(s.k, 0.0)
    tau = np.asarray(s.tau, dtype=float)
    # written as a1 k tau / max(a1, F2 S tau) so tau = 0 gives mu_t = 0
    return s.rho * c.a1 * k * tau / np.maximum(c.a1, F2 * s.S * tau)


def blend_constants(F1, consts=SstConstants(), ddes=DdesConstants()):
    """``(alpha, beta, sigma_k, sigma_w, C_DES)`` blended linearly by ``F1``."""
    F1 = np.asarray(F1, dtype=float)
    if np.any((F1 < 0) | (F1 > 1)):
        raise DomainError("F1 must lie in [0, 1]")
    c = consts
    g = 1.0 - F1
    return (c.alpha1 * F1 + c.alpha2 * g,
            c.beta1 * F1 + c.beta2 * g,
            c.sigma_k1 * F1 + c.sigma_k2 * g,
            c.sigma_w1 * F1 + c.sigma_w2 * g,
            ddes.c_des1 * F1 + ddes.c_des2 * g)


def effective_diffusivity(mu, mu_t, sigma):
    """``mu + sigma mu_t``: Menter's convention, which recovers kappa = 0.41 in the log layer."""
    return mu + sigma * np.asarray(mu_t)


def benton_factor(mu, mu_t):
    """``mu_t / max(10 mu, mu_t)``, in [0, 1]."""
    mu_t = np.asarray(mu_t, dtype=float)
    return mu_t / np.maximum(10.0 * mu, mu_t)


def production(mu_t, S, k, tau, rho=1.0, consts=SstConstants()):
    """Limited production ``min(mu_t S^2, 10 C_mu rho k / tau)``."""
    return np.minimum(mu_t * S**2, 10.0 * consts.c_mu * rho * k / tau)


def stau_term(gamma_w, tau, grad_tau=None, grad_sqrt_tau=None, rho=1.0):
    """``8 Gamma_w rho |grad sqrt(tau)|^2``, the regular form of ``2 Gamma_w |grad tau|^2 / tau``."""
    if grad_sqrt_tau is None:
        grad_sqrt_tau = np.asarray(grad_tau) / (2.0 * np.sqrt(np.asarray(tau))[..., None])
    return 8.0 * gamma_w * rho * _dot(grad_sqrt_tau, grad_sqrt_tau)


def ktau_sources(s: LocalClosureState, ev: ClosureEvaluation | None = None,
                 consts=SstConstants()):
    """k and tau source terms.

    Returns ``(source_k, source_tau)`` where ``source_tau`` already carries
    the Benton factor; the unscaled parts are stored in ``ev.parts``.
    """
    c = consts
    if ev is None:
        ev = evaluate_ktau(s, c)
    rho = s.rho
    k = np.maximum(s.k, 0.0)
    tau = np.asarray(s.tau, dtype=float)
    P = ev.P_k
    source_k = P - rho * c.beta_star * k / tau
    # rho / mu_t * P_k; in the limit mu_t -> 0, P_k = mu_t S^2 so the ratio is rho S^2
    safe = ev.mu_t > 0
    ratio = np.where(safe, rho * P / np.where(safe, ev.mu_t, 1.0), rho * np.asarray(s.S) ** 2)
    prod = -ev.alpha * tau**2 * ratio
    dest = rho * ev.beta * np.ones_like(tau)
    cross = 2.0 * (1.0 - ev.F1) * rho * c.sigma_w2 * tau * _dot(s.grad_k, s.grad_tau)
    stau = -stau_term(ev.gamma_w, tau, s.grad_tau, s.grad_sqrt_tau, rho)
    raw = prod + dest + cross + stau
    ev.parts.update(production=prod, destruction=dest, cross_diffusion=cross, s_tau=stau)
    # Benton scaling; the production part is formed without dividing by mu_t
    R = np.maximum(10.0 * s.mu, ev.mu_t)
    prod_b = -ev.alpha * tau**2 * rho * P / R
    source_tau = prod_b + ev.benton * (dest + cross + stau)
    ev.source_k = source_k
    ev.source_tau = source_tau
    ev.parts["raw_tau"] = raw
    return source_k, source_tau


def evaluate_ktau(s: LocalClosureState, consts=SstConstants(), ddes=DdesConstants()):
    """Full pointwise k-tau SST closure evaluation (off-wall points)."""
    F1, F2, arg1, arg2, cd = blending_state(s, consts)
    mu_t = eddy_viscosity(s, F2, consts)
    alpha, beta, sk, sw, _ = blend_constants(F1, consts, ddes)
    P = production(mu_t, s.S, np.maximum(s.k, 0.0), s.tau, s.rho, consts)
    ev = ClosureEvaluation(F1=F1, F2=F2, arg1=arg1, arg2=arg2, cd_kw=cd, mu_t=mu_t,
                           alpha=alpha, beta=beta, sigma_k=sk, sigma_w=sw, P_k=P,
                           gamma_k=effective_diffusivity(s.mu, mu_t, sk),
                           gamma_w=effective_diffusivity(s.mu, mu_t, sw),
                           benton=benton_factor(s.mu, mu_t))
    ktau_sources(s, ev, consts)
    return ev


# ---------------------------------------------------------------------------
# k-omega SST reference
# ---------------------------------------------------------------------------

@dataclass
class KOmegaEvaluation:
    source_k: np.ndarray
    source_w: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    arg1: np.ndarray
    arg2: np.ndarray
    cd_kw: np.ndarray
    mu_t: np.ndarray
    P_k: np.ndarray
    gamma_k: np.ndarray
    gamma_w: np.ndarray
    parts: dict


def komega_sources(k, omega, grad_k, grad_omega, S, d, nu, rho=1.0, consts=SstConstants()):
    """Menter SST source terms in the omega form."""
    c = consts
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("omega must be positive")
    _check_positive_distance(d)
    k = np.maximum(np.asarray(k, dtype=float), 0.0)
    d = np.asarray(d, dtype=float)
    sqk = np.sqrt(k)
    gkw = _dot(grad_k, grad_omega)
    cd = np.maximum(2.0 * c.sigma_w2 * gkw / omega, CD_FLOOR)
    visc = 500.0 * nu / (d**2 * omega)
    arg1 = np.minimum(np.maximum(sqk / (c.beta_star * d * omega), visc),
                      4.0 * c.sigma_w2 * k / (cd * d**2))
    arg2 = np.maximum(2.0 * sqk / (c.beta_star * d * omega), visc)
    F1 = np.tanh(arg1**4)
    F2 = np.tanh(arg2**2)
    mu_t = rho * c.a1 * k / np.maximum(c.a1 * omega, F2 * S)
    alpha, beta, sk, sw, _ = blend_constants(F1, c)
    P = np.minimum(mu_t * S**2, 10.0 * c.c_mu * rho * k * omega)
    safe = mu_t > 0
    ratio = np.where(safe, rho * P / np.where(safe, mu_t, 1.0), rho * np.asarray(S) ** 2)
    prod = alpha * ratio
    dest = -rho * beta * omega**2
    cross = 2.0 * (1.0 - F1) * rho * c.sigma_w2 * gkw / omega
    source_k = P - rho * c.beta_star * k * omega
    mu = rho * nu
    return KOmegaEvaluation(source_k=source_k, source_w=prod + dest + cross, F1=F1, F2=F2,
                            arg1=arg1, arg2=arg2, cd_kw=cd, mu_t=mu_t, P_k=P,
                            gamma_k=effective_diffusivity(mu, mu_t, sk),
                            gamma_w=effective_diffusivity(mu, mu_t, sw),
                            parts=dict(production=prod, destruction=dest, cross_diffusion=cross))


# ---------------------------------------------------------------------------
# DDES
# ---------------------------------------------------------------------------

def delay_function(nu_t, nu, d, S, Omega, consts=SstConstants(), ddes=DdesConstants()):
    """``(f_d, r_d)`` of the delayed-DES shielding function."""
    _check_positive_distance(d)
    denom = np.maximum(np.sqrt(0.5 * (np.asarray(S) ** 2 + np.asarray(Omega) ** 2)),
                       RD_DENOMINATOR_FLOOR)
    r_d = (nu_t + nu) / (consts.kappa**2 * np.asarray(d) ** 2 * denom)
    f_d = 1.0 - np.tanh((ddes.c_d1 * r_d) ** ddes.c_d2)
    return f_d, r_d


def ddes_length_scale(k, tau, F1, f_d, h_max, consts=SstConstants(), ddes=DdesConstants(),
                      rho=1.0, r_d=None):
    """RANS, LES and blended DDES length scales and the k destruction term."""
    k = np.maximum(np.asarray(k, dtype=float), 0.0)
    tau = np.asarray(tau, dtype=float)
    F1 = np.asarray(F1, dtype=float)
    f_d = np.asarray(f_d, dtype=float)
    c_des = ddes.c_des1 * F1 + ddes.c_des2 * (1.0 - F1)
    sqk = np.sqrt(k)
    l_rans = sqk * tau / consts.c_mu
    l_les = c_des * np.asarray(h_max)
    # l_RANS - f_d max(0, l_RANS - l_LES), written as a convex combination so that
    # f_d = 0 and f_d = 1 give l_RANS and min(l_RANS, l_LES) without cancellation
    l_ddes = np.where(l_rans > l_les, (1.0 - f_d) * l_rans + f_d * l_les, l_rans)
    # guard: a vanishing length with k > 0 would make the destruction singular
    l_guard = sqk * TAU_FLOOR / consts.c_mu
    bad = (k > 0) & (l_ddes < l_guard)
    l_eff = np.where(bad, l_guard, l_ddes)
    with np.errstate(divide="ignore", invalid="ignore"):
        destruction = np.where(k > 0, rho * k * sqk / np.where(k > 0, l_eff, 1.0), 0.0)
    return DdesEvaluation(l_rans=l_rans, l_les=l_les, l_ddes=l_ddes, c_des=c_des, f_d=f_d,
                          r_d=r_d, destruction=destruction, guard_events=int(np.count_nonzero(bad)))
