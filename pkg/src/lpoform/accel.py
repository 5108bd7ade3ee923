"""Compiled right-hand sides for the analytic-ephemeris force model.

These kernels mirror the numpy implementations in `dynamics` and `pathcon`
bit-for-bit in structure (same operation order) and are used by the
propagator when the scenario runs on an analytic ephemeris.  The tabulated
path stays in numpy.

Parameter packing (float64):
  ep[0]  mu_earth (canonical)     ep[7]  sun phase at epoch (rad)
  ep[1]  earth semi-major (DU)    ep[8]  barycenter factor
  ep[2]  earth eccentricity       ep[9]  earth enabled (0/1)
  ep[3]  earth mean motion (/TU)  ep[10] sun enabled (0/1)
  ep[4]  mu_sun (canonical)       ep[11] srp enabled (0/1)
  ep[5]  au (DU)                  ep[12] srp strength k (canonical)
  ep[6]  sun mean motion (/TU)

  pp[0] t0   pp[1] t1   pp[2] kappa   pp[3] alpha
  pp[4] dr_min  pp[5] delta_min  pp[6] dr_max  pp[7] delta_max
  pp[8] slack residual scale
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _kepler_e_anom(mean_anom, ecc):
    twopi = 2.0 * math.pi
    m = mean_anom - twopi * math.floor(mean_anom / twopi)
    e_anom = m if ecc < 0.8 else math.pi
    for _ in range(50):
        f = e_anom - ecc * math.sin(e_anom) - m
        e_anom -= f / (1.0 - ecc * math.cos(e_anom))
        if abs(f) < 1e-15:
            break
    return e_anom


@njit(cache=True)
def _earth_pos(t, ep):
    a = ep[1]
    e = ep[2]
    e_anom = _kepler_e_anom(ep[3] * t, e)
    ce = math.cos(e_anom)
    se = math.sin(e_anom)
    b_over_a = math.sqrt(1.0 - e * e)
    out = np.empty(3)
    out[0] = -(a * (ce - e))
    out[1] = -(a * b_over_a * se)
    out[2] = 0.0
    return out


@njit(cache=True)
def _sun_pos(t, ep):
    re = _earth_pos(t, ep)
    ang = ep[7] + ep[6] * t
    out = np.empty(3)
    out[0] = ep[8] * re[0] + ep[5] * math.cos(ang)
    out[1] = ep[8] * re[1] + ep[5] * math.sin(ang)
    out[2] = ep[8] * re[2]
    return out


@njit(cache=True)
def _accel(r, t, ep):
    rn = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    rn3 = rn * rn * rn
    acc = np.empty(3)
    for c in range(3):
        acc[c] = -r[c] / rn3

    if ep[9] != 0.0:
        rb = _earth_pos(t, ep)
        bn = math.sqrt(rb[0] * rb[0] + rb[1] * rb[1] + rb[2] * rb[2])
        bn3 = bn * bn * bn
        d0 = r[0] - rb[0]
        d1 = r[1] - rb[1]
        d2 = r[2] - rb[2]
        dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        dn3 = dn * dn * dn
        mu = ep[0]
        acc[0] -= mu * (d0 / dn3 + rb[0] / bn3)
        acc[1] -= mu * (d1 / dn3 + rb[1] / bn3)
        acc[2] -= mu * (d2 / dn3 + rb[2] / bn3)

    if ep[10] != 0.0 or ep[11] != 0.0:
        rs = _sun_pos(t, ep)
        d0 = r[0] - rs[0]
        d1 = r[1] - rs[1]
        d2 = r[2] - rs[2]
        dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        dn3 = dn * dn * dn
        if ep[10] != 0.0:
            sn = math.sqrt(rs[0] * rs[0] + rs[1] * rs[1] + rs[2] * rs[2])
            sn3 = sn * sn * sn
            mu = ep[4]
            acc[0] -= mu * (d0 / dn3 + rs[0] / sn3)
            acc[1] -= mu * (d1 / dn3 + rs[1] / sn3)
            acc[2] -= mu * (d2 / dn3 + rs[2] / sn3)
        if ep[11] != 0.0:
            k = ep[12]
            acc[0] += k * d0 / dn3
            acc[1] += k * d1 / dn3
            acc[2] += k * d2 / dn3
    return acc


@njit(cache=True)
def _add_point_gradient(g, d, coeff):
    dn = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    dn3 = dn * dn * dn
    dn5 = dn3 * dn * dn
    for a in range(3):
        g[a, a] += coeff / dn3
        for b in range(3):
            g[a, b] -= coeff * 3.0 * d[a] * d[b] / dn5


@njit(cache=True)
def _grad(r, t, ep):
    g = np.zeros((3, 3))
    _add_point_gradient(g, r, -1.0)
    if ep[9] != 0.0:
        rb = _earth_pos(t, ep)
        _add_point_gradient(g, r - rb, -ep[0])
    if ep[10] != 0.0 or ep[11] != 0.0:
        rs = _sun_pos(t, ep)
        d = r - rs
        if ep[10] != 0.0:
            _add_point_gradient(g, d, -ep[4])
        if ep[11] != 0.0:
            _add_point_gradient(g, d, ep[12])
    return g


@njit(cache=True)
def _stack_rhs(t, y, ep, m):
    out = np.empty(6 * m)
    for i in range(m):
        b = 6 * i
        acc = _accel(y[b:b + 3], t, ep)
        out[b] = y[b + 3]
        out[b + 1] = y[b + 4]
        out[b + 2] = y[b + 5]
        out[b + 3] = acc[0]
        out[b + 4] = acc[1]
        out[b + 5] = acc[2]
    return out


@njit(cache=True)
def _stack_jacobian(t, y, ep, m):
    n = 6 * m
    jac = np.zeros((n, n))
    for i in range(m):
        b = 6 * i
        g = _grad(y[b:b + 3], t, ep)
        for a in range(3):
            jac[b + a, b + 3 + a] = 1.0
            for c in range(3):
                jac[b + 3 + a, b + c] = g[a, c]
    return jac


@njit(cache=True)
def _slack_terms(t, y, pp, pairs):
    """Per-pair tightened residuals (g_min, g_max) and unit separation."""
    q = pairs.shape[0]
    gmin = np.empty(q)
    gmax = np.empty(q)
    nhat = np.empty((q, 3))
    sep = np.empty(q)
    tau = (t - pp[0]) / (pp[1] - pp[0])
    kt = pp[2] * tau
    zmin = pp[5] - 1.0 / (kt + 1.0 / pp[5]) if pp[5] != 0.0 else 0.0
    zmax = pp[7] - 1.0 / (kt + 1.0 / pp[7]) if pp[7] != 0.0 else 0.0
    for p in range(q):
        i = pairs[p, 0]
        j = pairs[p, 1]
        d0 = y[6 * i] - y[6 * j]
        d1 = y[6 * i + 1] - y[6 * j + 1]
        d2 = y[6 * i + 2] - y[6 * j + 2]
        dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        sep[p] = dn
        if dn > 0.0:
            nhat[p, 0] = d0 / dn
            nhat[p, 1] = d1 / dn
            nhat[p, 2] = d2 / dn
        else:
            nhat[p, 0] = 0.0
            nhat[p, 1] = 0.0
            nhat[p, 2] = 1.0
        gmin[p] = pp[4] + zmin - dn
        gmax[p] = -pp[6] + zmax + dn
    return gmin, gmax, nhat, sep


@njit(cache=True)
def _aug_rhs(t, y, ep, m, pp, pairs):
    q = pairs.shape[0]
    n6m = 6 * m
    out = np.empty(n6m + 2 * q)
    out[:n6m] = _stack_rhs(t, y[:n6m], ep, m)
    gmin, gmax, _, _ = _slack_terms(t, y, pp, pairs)
    alpha = pp[3]
    s = pp[8]
    for p in range(q):
        out[n6m + p] = max(0.0, s * gmin[p]) ** alpha
        out[n6m + q + p] = max(0.0, s * gmax[p]) ** alpha
    return out


@njit(cache=True)
def _aug_jacobian(t, y, ep, m, pp, pairs):
    q = pairs.shape[0]
    n6m = 6 * m
    n = n6m + 2 * q
    jac = np.zeros((n, n))
    jac[:n6m, :n6m] = _stack_jacobian(t, y[:n6m], ep, m)
    gmin, gmax, nhat, _ = _slack_terms(t, y, pp, pairs)
    alpha = pp[3]
    s_pow = pp[8] ** pp[3]
    for p in range(q):
        i = pairs[p, 0]
        j = pairs[p, 1]
        if gmin[p] > 0.0:
            coeff = s_pow * alpha * gmin[p] ** (alpha - 1.0)
            for c in range(3):
                jac[n6m + p, 6 * i + c] = -coeff * nhat[p, c]
                jac[n6m + p, 6 * j + c] = coeff * nhat[p, c]
        if gmax[p] > 0.0:
            coeff = s_pow * alpha * gmax[p] ** (alpha - 1.0)
            for c in range(3):
                jac[n6m + q + p, 6 * i + c] = coeff * nhat[p, c]
                jac[n6m + q + p, 6 * j + c] = -coeff * nhat[p, c]
    return jac


@njit(cache=True)
def _stack_var_rhs(t, z, ep, m):
    n = 6 * m
    out = np.empty(n + n * n)
    out[:n] = _stack_rhs(t, z[:n], ep, m)
    jac = _stack_jacobian(t, z[:n], ep, m)
    phi = z[n:].reshape(n, n)
    out[n:] = (jac @ phi).ravel()
    return out


@njit(cache=True)
def _aug_var_rhs(t, z, ep, m, pp, pairs):
    q = pairs.shape[0]
    n = 6 * m + 2 * q
    out = np.empty(n + n * n)
    out[:n] = _aug_rhs(t, z[:n], ep, m, pp, pairs)
    jac = _aug_jacobian(t, z[:n], ep, m, pp, pairs)
    phi = z[n:].reshape(n, n)
    out[n:] = (jac @ phi).ravel()
    return out


def pack_ephemeris(ceph, srp) -> np.ndarray | None:
    """Pack an analytic CanonicalEphemeris + SrpParams; None if unsupported."""
    provider = getattr(ceph, "provider", None)
    if provider is None or getattr(provider, "mode", "") != "analytic":
        return None
    scales = ceph.scales
    ep = np.zeros(13)
    ep[0] = provider.mu_earth / scales.mu_moon
    ep[1] = provider.earth_sma / scales.du
    ep[2] = provider.earth_ecc
    ep[3] = provider.earth_mean_motion * scales.tu
    ep[4] = provider.mu_sun / scales.mu_moon
    ep[5] = provider.au / scales.du
    ep[6] = provider.sun_mean_motion * scales.tu
    ep[7] = provider.sun_phase0
    ep[8] = provider.barycenter_factor
    ep[9] = 1.0 if "earth" in provider.bodies else 0.0
    ep[10] = 1.0 if "sun" in provider.bodies else 0.0
    ep[11] = 1.0 if srp.enabled else 0.0
    ep[12] = srp.strength if srp.enabled else 0.0
    if ep[11] != 0.0 and "sun" not in provider.bodies:
        return None
    return ep


def pack_path(bounds, horizon) -> np.ndarray:
    pp = np.zeros(9)
    pp[0], pp[1] = float(horizon[0]), float(horizon[1])
    pp[2] = bounds.kappa
    pp[3] = bounds.alpha
    pp[4] = bounds.dr_min
    pp[5] = bounds.delta_min
    pp[6] = bounds.dr_max
    pp[7] = bounds.delta_max
    pp[8] = bounds.slack_scale
    return pp


def stack_callables(ep: np.ndarray, m: int):
    """(fun, var_fun) for the stacked field."""
    def fun(t, y):
        return _stack_rhs(t, y, ep, m)

    def var_fun(t, z):
        return _stack_var_rhs(t, z, ep, m)

    return fun, var_fun


def augmented_callables(ep: np.ndarray, m: int, pp: np.ndarray,
                        pairs: np.ndarray):
    """(fun, var_fun) for the augmented field."""
    pairs = np.ascontiguousarray(pairs, dtype=np.int64)

    def fun(t, y):
        return _aug_rhs(t, y, ep, m, pp, pairs)

    def var_fun(t, z):
        return _aug_var_rhs(t, z, ep, m, pp, pairs)

    return fun, var_fun
