"""Water-filling power laws for VoD and RT users and the rate maps they induce.

All per-subcarrier quantities are expressed through the normalised average
power ``x = alpha * P_S / (phi * sigma0^2)``; under unit-mean exponential
fading the water level only depends on ``x`` (and on ``beta`` for RT users).

VoD (average-rate) law, water level nu solving

    exp(-nu)/nu - E1(nu) = x,            F_D = B/ln2 * E1(nu)

RT (effective-capacity) law with s = 1/(beta + 1):

    nu^-s * Gamma(s, nu) - E1(nu) = x,   F_R = 1 - exp(-nu) + nu^(1-s) * Gamma(s, nu)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .numerics.special import DomainError

LN2 = math.log(2.0)
# largest water level tracked; beyond it the subcarrier is practically silent
NU_MAX = 700.0
NU_MIN = math.exp(-700.0)
_NU_HESS_CAP = 600.0


@dataclass(frozen=True)
class LinkParams:
    """alpha: linear large-scale gain; phi >= 1: capacity gap; noise_power: sigma0^2 (W); bandwidth: B (Hz)."""

    alpha: float
    phi: float = 1.0
    noise_power: float = 7.5178e-17
    bandwidth: float = 15e3

    def __post_init__(self):
        if not (self.alpha > 0 and self.noise_power > 0 and self.bandwidth > 0):
            raise ValueError("alpha, noise_power and bandwidth must be positive")
        if self.phi < 1:
            raise ValueError("phi must be >= 1")

    @property
    def scale(self) -> float:
        """phi * sigma0^2 / alpha, the power that maps to unit normalised SNR."""
        return self.phi * self.noise_power / self.alpha

    def normalised(self, p_sub):
        return np.asarray(p_sub, dtype=float) / self.scale


def _rt_shape(beta):
    beta = np.asarray(beta, dtype=float)
    if np.any(~(beta > 0)):
        raise DomainError("beta must be positive")
    return 1.0 / (beta + 1.0)


# --- power-vs-level curves -------------------------------------------------

def vod_power_curve(nu):
    """Normalised average power exp(-nu)/nu - E1(nu) at water level nu."""
    nu = np.asarray(nu, dtype=float)
    return np.exp(-nu) / nu - _sp.exp1(nu)


def rt_power_curve(nu, beta):
    """Normalised average power nu^-s Gamma(s, nu) - E1(nu) at water level nu."""
    nu = np.asarray(nu, dtype=float)
    s = _rt_shape(beta)
    return nu ** (-s) * _sp.gammaincc(s, nu) * _sp.gamma(s) - _sp.exp1(nu)


def _solve_level(x, curve, dlog_curve, nu0=None):
    """Vectorised safeguarded Newton for curve(nu) = x on log-log axes.

    ``nu0`` optionally warm-starts the iteration (same shape as ``x``).
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.reshape(-1)
    out = np.full(x.shape, NU_MAX)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        live = x > 0
        lnx = np.log(np.where(live, x, 1.0))
        floor = math.log(max(float(curve(np.array([NU_MAX]), None, scalar=True)[0]), 1e-320))
        live &= lnx >= floor
        idx = np.flatnonzero(live)
        if idx.size == 0:
            return out.reshape(shape)
        lnx_l = lnx[idx]
        lo = np.full(idx.size, math.log(NU_MIN))
        hi = np.full(idx.size, math.log(NU_MAX))
        # large x: nu ~ 1/x-ish, small x: nu ~ -ln x
        u = np.where(lnx_l > 0, -lnx_l, np.log(np.maximum(-lnx_l, 1e-3) + 1.0))
        if nu0 is not None:
            g = np.log(np.asarray(nu0, dtype=float).reshape(-1)[idx])
            u = np.where(np.isfinite(g), g, u)
        u = np.clip(u, lo + 1e-9, hi - 1e-9)
        pos_l = np.arange(idx.size)  # positions (within idx) still iterating
        for _ in range(200):
            uu = u[pos_l]
            nu = np.exp(uu)
            sub = idx[pos_l]
            val = curve(nu, sub)
            f = np.log(val) - lnx_l[pos_l]
            bad = ~np.isfinite(f)
            if bad.any():
                f[bad] = 1.0  # treat as "level too low"
            pos = f > 0
            lo_p = np.where(pos, uu, lo[pos_l])
            hi_p = np.where(pos, hi[pos_l], uu)
            lo[pos_l] = lo_p
            hi[pos_l] = hi_p
            step = f / dlog_curve(nu, val, sub)
            un = uu - step
            done = (np.abs(f) < 1e-14) | ((hi_p - lo_p) < 1e-15) | (np.abs(step) < 1e-15)
            outside = ~np.isfinite(un) | (un < lo_p) | (un > hi_p) | bad
            if outside.any():
                un[outside] = 0.5 * (lo_p[outside] + hi_p[outside])
            u[pos_l] = np.where(done, uu, un)
            pos_l = pos_l[~done]
            if pos_l.size == 0:
                break
        out[idx] = np.exp(u)
    return out.reshape(shape)


def vod_level_from_normalised(x, nu0=None):
    def curve(nu, idx=None, scalar=False):
        return vod_power_curve(nu)

    def dlog(nu, val, idx):
        return -np.exp(-nu) / nu / val

    return _solve_level(x, curve, dlog, nu0)


def rt_level_from_normalised(x, beta, nu0=None):
    x = np.asarray(x, dtype=float)
    beta_full = np.broadcast_to(np.asarray(beta, dtype=float), x.shape).reshape(-1)
    s_full = _rt_shape(beta_full)
    gs_full = _sp.gamma(s_full)

    def curve(nu, idx=None, scalar=False):
        if scalar:
            # the smallest shape gives the smallest tail value: a safe common floor
            sm = float(s_full.min()) if s_full.size else 1.0
            return nu ** (-sm) * _sp.gammaincc(sm, nu) * _sp.gamma(sm) - _sp.exp1(nu)
        if idx is None:
            return nu ** (-s_full) * _sp.gammaincc(s_full, nu) * gs_full - _sp.exp1(nu)
        s = s_full[idx]
        return nu ** (-s) * _sp.gammaincc(s, nu) * gs_full[idx] - _sp.exp1(nu)

    def dlog(nu, val, idx):
        s = s_full[idx]
        # nu * dpsi/dnu / psi
        return -s * nu ** (-s) * _sp.gammaincc(s, nu) * gs_full[idx] / val

    return _solve_level(x, curve, dlog, nu0)


# --- public per-operation API ------------------------------------------------

def vod_slot_power(nu, g, params: LinkParams):
    nu = np.asarray(nu, dtype=float)
    g = np.asarray(g, dtype=float)
    with np.errstate(divide="ignore"):
        p = params.scale * (1.0 / nu - 1.0 / g)
    out = np.where(g >= nu, np.maximum(p, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def rt_slot_power(nu, g, beta, params: LinkParams):
    nu = np.asarray(nu, dtype=float)
    g = np.asarray(g, dtype=float)
    s = 1.0 / (np.asarray(beta, dtype=float) + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = params.scale * (nu ** (-s) * g ** (s - 1.0) - 1.0 / g)
    out = np.where(g >= nu, np.maximum(p, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def allocate_slot_power(nu, g, params: LinkParams, beta=None):
    """Per-subcarrier powers of one slot: VoD law when ``beta`` is None, RT law otherwise."""
    if beta is None:
        return vod_slot_power(nu, g, params)
    return rt_slot_power(nu, g, beta, params)


def slot_rate(nu, g, bandwidth: float, beta=None, axis=-1):
    """Instantaneous rate (bits/s) summed over ``axis``.

    Substituting the water-filling powers into B log2(1 + SNR g) leaves
    B log2(g/nu) on active subcarriers (scaled by 1/(beta+1) for RT users).
    """
    g = np.asarray(g, dtype=float)
    with np.errstate(divide="ignore"):
        per = np.where(g >= nu, np.log2(np.maximum(g, 1e-300) / nu), 0.0)
    factor = bandwidth if beta is None else bandwidth / (float(beta) + 1.0)
    return factor * per.sum(axis=axis)


def _as_out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def vod_water_level(p_sub, params: LinkParams):
    p_sub = np.asarray(p_sub, dtype=float)
    if np.any(~(p_sub > 0)):
        raise DomainError("average power per subcarrier must be positive")
    return _as_out(vod_level_from_normalised(params.normalised(p_sub)))


def rt_water_level(p_sub, beta, params: LinkParams):
    p_sub = np.asarray(p_sub, dtype=float)
    if np.any(~(p_sub > 0)):
        raise DomainError("average power per subcarrier must be positive")
    return _as_out(rt_level_from_normalised(params.normalised(p_sub), beta))


def vod_avg_power(nu, params: LinkParams):
    """Average power per subcarrier consumed by the VoD law at level nu (inverse of vod_water_level)."""
    return _as_out(params.scale * vod_power_curve(nu))


def rt_avg_power(nu, beta, params: LinkParams):
    return _as_out(params.scale * rt_power_curve(nu, beta))


def vod_rate_per_subcarrier(p_sub, params: LinkParams):
    """F_D(P_S) in bits/s; zero at zero power."""
    p_sub = np.asarray(p_sub, dtype=float)
    nu = vod_level_from_normalised(params.normalised(np.maximum(p_sub, 0.0)))
    out = np.where(p_sub > 0, params.bandwidth / LN2 * _sp.exp1(nu), 0.0)
    return _as_out(out)


def vod_avg_rate(p_avg, k, params: LinkParams):
    """K * F_D(P/K): planned average service rate (bits/s)."""
    p_avg = np.asarray(p_avg, dtype=float)
    k = np.asarray(k, dtype=float)
    live = (p_avg > 0) & (k > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_sub = np.where(live, p_avg / np.where(live, k, 1.0), 0.0)
    return _as_out(np.where(live, k * vod_rate_per_subcarrier(p_sub, params), 0.0))


def _one_minus_fr(nu, s):
    return np.exp(-nu) - nu ** (1.0 - s) * _sp.gammaincc(s, nu) * _sp.gamma(s)


def rt_F(p_sub, beta, params: LinkParams):
    """E[(1 + SNR*g)^-beta] under the RT law; equals 1 at zero power."""
    p_sub = np.asarray(p_sub, dtype=float)
    if np.any(p_sub < 0):
        raise DomainError("power must be nonnegative")
    s = _rt_shape(beta)
    nu = rt_level_from_normalised(params.normalised(p_sub), beta)
    out = np.where(p_sub > 0, 1.0 - _one_minus_fr(nu, s), 1.0)
    return _as_out(out)


def rt_log_F(p_sub, beta, params: LinkParams):
    p_sub = np.asarray(p_sub, dtype=float)
    s = _rt_shape(beta)
    nu = rt_level_from_normalised(params.normalised(p_sub), beta)
    return _as_out(np.where(p_sub > 0, np.log1p(-_one_minus_fr(nu, s)), 0.0))


def effective_capacity(p_avg, k, beta, theta, tau, params: LinkParams):
    """-(K / (theta*tau)) ln F_R(P/K) in bits/s."""
    p_avg = np.asarray(p_avg, dtype=float)
    k = np.asarray(k, dtype=float)
    live = (p_avg > 0) & (k > 0)
    p_sub = np.where(live, p_avg / np.where(live, k, 1.0), 0.0)
    out = np.where(live, -k / (theta * tau) * rt_log_F(p_sub, beta, params), 0.0)
    return _as_out(out)


def rt_F_derivative(p_sub, beta, params: LinkParams):
    """dF_R/dP_S = -(alpha/(phi sigma0^2)) * beta * nu."""
    nu = rt_water_level(p_sub, beta, params)
    return _as_out(-np.asarray(beta, dtype=float) * nu / params.scale)


def vod_rate_derivative(p_sub, params: LinkParams):
    """dF_D/dP_S = (B/ln2) * nu * alpha/(phi sigma0^2)."""
    nu = vod_water_level(p_sub, params)
    return _as_out(params.bandwidth / LN2 * nu / params.scale)


# --- value/derivative triples used by the planner --------------------------

def vod_terms(x, bandwidth: float, nu0=None):
    """(f, df/dx, d2f/dx2, nu) of F_D as functions of normalised power x (vectorised)."""
    nu = vod_level_from_normalised(x, nu0)
    k = bandwidth / LN2
    f = k * _sp.exp1(nu)
    d1 = k * nu
    nc = np.minimum(nu, _NU_HESS_CAP)
    d2 = -k * nc**2 * np.exp(nc)
    return f, d1, d2, nu


def rt_terms(x, beta, bandwidth: float, nu0=None):
    """(h, dh/dx, d2h/dx2, nu) of h = -(B/(beta ln2)) ln F_R in normalised power x."""
    beta = np.broadcast_to(np.asarray(beta, dtype=float), np.shape(x))
    s = 1.0 / (beta + 1.0)
    nu = rt_level_from_normalised(x, beta, nu0)
    one_minus = _one_minus_fr(nu, s)
    fr = 1.0 - one_minus
    k = bandwidth / LN2
    h = -k / beta * np.log1p(-one_minus)
    d1 = k * nu / fr
    nc = np.minimum(nu, _NU_HESS_CAP)
    log_gamma = np.log(np.maximum(_sp.gammaincc(s, nc), 1e-320)) + _sp.gammaln(s)
    ratio = np.exp((1.0 + s) * np.log(nc) - log_gamma)
    d2 = k / fr**2 * (beta * nc**2 - (beta + 1.0) * ratio * fr)
    return h, d1, d2, nu
