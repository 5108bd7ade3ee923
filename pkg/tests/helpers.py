"""Independent oracles used by the tests: Keplerian two-body solutions,
finite differences, and rotation construction.  These deliberately avoid
the library's propagation and frame code paths.
"""

import math

import numpy as np


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    ax = np.array([[0.0, -axis[2], axis[1]],
                   [axis[2], 0.0, -axis[0]],
                   [-axis[1], axis[0], 0.0]])
    return c * np.eye(3) + s * ax + (1.0 - c) * np.outer(axis, axis)


def state_from_elements(mu, a, e, inc, raan, argp, nu):
    """Classical elements to Cartesian state."""
    p = a * (1.0 - e * e)
    r = p / (1.0 + e * math.cos(nu))
    r_pf = np.array([r * math.cos(nu), r * math.sin(nu), 0.0])
    v_pf = math.sqrt(mu / p) * np.array([-math.sin(nu), e + math.cos(nu), 0.0])
    rot = (rotation_matrix([0, 0, 1], raan)
           @ rotation_matrix([1, 0, 0], inc)
           @ rotation_matrix([0, 0, 1], argp))
    return np.concatenate([rot @ r_pf, rot @ v_pf])


def elements_from_state(mu, x):
    """Cartesian state to (a, e, inc, raan, argp, nu) for elliptic orbits."""
    r = np.asarray(x[:3], dtype=float)
    v = np.asarray(x[3:], dtype=float)
    rn = np.linalg.norm(r)
    h = np.cross(r, v)
    hn = np.linalg.norm(h)
    n_vec = np.cross([0.0, 0.0, 1.0], h)
    e_vec = np.cross(v, h) / mu - r / rn
    e = np.linalg.norm(e_vec)
    energy = 0.5 * v @ v - mu / rn
    a = -mu / (2.0 * energy)
    inc = math.acos(np.clip(h[2] / hn, -1, 1))
    nn = np.linalg.norm(n_vec)
    if nn < 1e-12:
        raan = 0.0
        n_vec = np.array([1.0, 0.0, 0.0])
        nn = 1.0
    else:
        raan = math.atan2(n_vec[1], n_vec[0])
    argp = math.acos(np.clip(n_vec @ e_vec / (nn * e), -1, 1))
    if e_vec[2] < 0:
        argp = 2 * math.pi - argp
    nu = math.acos(np.clip(e_vec @ r / (e * rn), -1, 1))
    if r @ v < 0:
        nu = 2 * math.pi - nu
    return a, e, inc, raan, argp, nu


def kepler_propagate(mu, x0, dt):
    """Advance a two-body state by dt through Kepler's equation."""
    a, e, inc, raan, argp, nu = elements_from_state(mu, x0)
    ecc_anom0 = 2.0 * math.atan2(math.sqrt(1 - e) * math.sin(nu / 2),
                                 math.sqrt(1 + e) * math.cos(nu / 2))
    mean0 = ecc_anom0 - e * math.sin(ecc_anom0)
    n_motion = math.sqrt(mu / a**3)
    mean = mean0 + n_motion * dt
    ecc_anom = mean
    for _ in range(80):
        f = ecc_anom - e * math.sin(ecc_anom) - mean
        ecc_anom -= f / (1.0 - e * math.cos(ecc_anom))
        if abs(f) < 1e-15:
            break
    nu_new = 2.0 * math.atan2(math.sqrt(1 + e) * math.sin(ecc_anom / 2),
                              math.sqrt(1 - e) * math.cos(ecc_anom / 2))
    return state_from_elements(mu, a, e, inc, raan, argp, nu_new)


def orbit_period(mu, x0):
    a, *_ = elements_from_state(mu, x0)
    return 2.0 * math.pi * math.sqrt(a**3 / mu)


def finite_difference_jacobian(fun, x, h=1e-6):
    """Central differences, one column per coordinate."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    jac = np.zeros((f0.size, x.size))
    for c in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[c] += h
        xm[c] -= h
        jac[:, c] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h)
    return jac
