"""Perturbing-body ephemerides, frame transforms, and canonical scaling.

Everything here works in physical units (km, km/s, s past epoch zero);
:class:`CanonicalScales` and :class:`CanonicalEphemeris` convert to the
canonical units used by the dynamics.

Epoch-zero phase conventions (fixed, arbitrary but consistent):
the Earth sits along the -x axis of the Moon-centered inertial frame at
t = 0 (at perigee if its orbit is elliptical), and the Sun phase angle is
measured from +x in the same plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import constants
from .exceptions import (
    ConfigError,
    SingularFrameError,
    TimeRangeError,
    UnknownBodyError,
)

EARTH = "earth"
SUN = "sun"


@dataclass(frozen=True)
class CanonicalScales:
    """Canonical unit system in which the Moon's mu is 1.

    du is user-defined (km); vu = sqrt(mu_moon / du) and tu = du / vu follow
    exactly, so accelerations scale by vu**2/du = mu_moon/du**2.
    """

    du: float = constants.DEFAULT_DU_KM
    mu_moon: float = constants.MU_MOON

    def __post_init__(self):
        if self.du <= 0.0:
            raise ConfigError(f"distance unit must be positive, got {self.du}")
        if self.mu_moon <= 0.0:
            raise ConfigError(f"mu_moon must be positive, got {self.mu_moon}")

    @property
    def vu(self) -> float:
        """Velocity unit, km/s."""
        return math.sqrt(self.mu_moon / self.du)

    @property
    def tu(self) -> float:
        """Time unit, s."""
        return self.du / self.vu

    def scale_state(self, state_km: np.ndarray) -> np.ndarray:
        """Physical [km, km/s] 6-vector (or stacked 6M) to canonical."""
        state_km = np.asarray(state_km, dtype=float)
        out = np.empty_like(state_km)
        sixes = state_km.reshape(-1, 6)
        o = out.reshape(-1, 6)
        o[:, :3] = sixes[:, :3] / self.du
        o[:, 3:] = sixes[:, 3:] / self.vu
        return out

    def unscale_state(self, state_can: np.ndarray) -> np.ndarray:
        """Canonical 6-vector (or stacked 6M) to physical [km, km/s]."""
        state_can = np.asarray(state_can, dtype=float)
        out = np.empty_like(state_can)
        sixes = state_can.reshape(-1, 6)
        o = out.reshape(-1, 6)
        o[:, :3] = sixes[:, :3] * self.du
        o[:, 3:] = sixes[:, 3:] * self.vu
        return out

    def scale_time(self, t_s: float) -> float:
        return t_s / self.tu

    def unscale_time(self, t_tu: float) -> float:
        return t_tu * self.tu


def scale_state(state_km: np.ndarray, scales: CanonicalScales) -> np.ndarray:
    return scales.scale_state(state_km)


def unscale_state(state_can: np.ndarray, scales: CanonicalScales) -> np.ndarray:
    return scales.unscale_state(state_can)


def _kepler_eccentric_anomaly(mean_anom: float, ecc: float) -> float:
    """Solve E - e sin E = M by Newton iteration."""
    twopi = 2.0 * math.pi
    m = mean_anom - twopi * math.floor(mean_anom / twopi)
    e_anom = m if ecc < 0.8 else math.pi
    for _ in range(50):
        f = e_anom - ecc * math.sin(e_anom) - m
        e_anom -= f / (1.0 - ecc * math.cos(e_anom))
        if abs(f) < 1e-15:
            break
    return e_anom


@dataclass(frozen=True)
class AnalyticEphemeris:
    """Closed-form Earth and Sun positions relative to the Moon.

    The Earth follows a two-body ellipse about the Moon (mu_earth + mu_moon),
    perigee on the -x axis at t = 0.  The Sun moves on a circle of radius
    au about the Earth-Moon barycenter, coplanar with the Earth's orbit,
    at phase sun_phase0 from +x at t = 0.
    """

    mu_earth: float = constants.MU_EARTH
    mu_moon: float = constants.MU_MOON
    mu_sun: float = constants.MU_SUN
    earth_sma: float = constants.EARTH_MOON_DIST_KM   # km
    earth_ecc: float = 0.0
    au: float = constants.AU_KM                        # km
    sun_phase0: float = 0.0                            # rad
    bodies: tuple[str, ...] = (EARTH, SUN)

    def __post_init__(self):
        if self.earth_sma <= 0.0 or self.au <= 0.0:
            raise ConfigError("orbit radii must be positive")
        if not 0.0 <= self.earth_ecc < 1.0:
            raise ConfigError(f"earth eccentricity out of [0,1): {self.earth_ecc}")

    @property
    def mode(self) -> str:
        return "analytic"

    @property
    def earth_mean_motion(self) -> float:
        """rad/s of the Earth-Moon relative orbit."""
        return math.sqrt((self.mu_earth + self.mu_moon) / self.earth_sma**3)

    @property
    def earth_period(self) -> float:
        return 2.0 * math.pi / self.earth_mean_motion

    @property
    def sun_mean_motion(self) -> float:
        return math.sqrt((self.mu_sun + self.mu_earth + self.mu_moon) / self.au**3)

    @property
    def barycenter_factor(self) -> float:
        """Barycenter position = factor * Earth position (Moon-centered)."""
        return self.mu_earth / (self.mu_earth + self.mu_moon)

    def mu(self, body: str) -> float:
        if body == EARTH:
            return self.mu_earth
        if body == SUN:
            return self.mu_sun
        raise UnknownBodyError(f"no body {body!r} in analytic ephemeris")

    def _earth_rva(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a, e = self.earth_sma, self.earth_ecc
        n = self.earth_mean_motion
        e_anom = _kepler_eccentric_anomaly(n * t, e)
        ce, se = math.cos(e_anom), math.sin(e_anom)
        b_over_a = math.sqrt(1.0 - e * e)
        # perifocal, then rotate by pi about z so perigee lies along -x
        r = np.array([-(a * (ce - e)), -(a * b_over_a * se), 0.0])
        edot = n / (1.0 - e * ce)
        v = np.array([a * se * edot, -(a * b_over_a * ce * edot), 0.0])
        rn = np.linalg.norm(r)
        acc = -(self.mu_earth + self.mu_moon) * r / rn**3
        return r, v, acc

    def _sun_rva(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        re, ve, ae = self._earth_rva(t)
        f = self.barycenter_factor
        ns = self.sun_mean_motion
        ang = self.sun_phase0 + ns * t
        c, s = math.cos(ang), math.sin(ang)
        r = f * re + self.au * np.array([c, s, 0.0])
        v = f * ve + self.au * ns * np.array([-s, c, 0.0])
        acc = f * ae + self.au * ns * ns * np.array([-c, -s, 0.0])
        return r, v, acc

    def _rva(self, body: str, t: float):
        if body == EARTH:
            return self._earth_rva(t)
        if body == SUN:
            return self._sun_rva(t)
        raise UnknownBodyError(f"no body {body!r} in analytic ephemeris")

    def position(self, body: str, t: float) -> np.ndarray:
        return self._rva(body, t)[0]

    def velocity(self, body: str, t: float) -> np.ndarray:
        return self._rva(body, t)[1]

    def acceleration(self, body: str, t: float) -> np.ndarray:
        return self._rva(body, t)[2]


class TabulatedEphemeris:
    """Body positions from a sampled table, C1 cubic Hermite in between.

    Slopes are finite-differenced from the samples; velocity and
    acceleration are the first and second derivatives of the interpolant.
    """

    def __init__(self, tables: dict[str, tuple[np.ndarray, np.ndarray]],
                 mus: dict[str, float]):
        """tables: body -> (times_s strictly increasing, positions (n,3) km)."""
        self._splines = {}
        self._spans = {}
        self._mus = dict(mus)
        for body, (t, xyz) in tables.items():
            t = np.asarray(t, dtype=float)
            xyz = np.asarray(xyz, dtype=float)
            if t.ndim != 1 or xyz.shape != (t.size, 3):
                raise ConfigError(f"table for {body!r} malformed")
            if t.size < 4:
                raise ConfigError(f"table for {body!r} needs >= 4 samples")
            if np.any(np.diff(t) <= 0.0):
                raise ConfigError(f"table times for {body!r} not strictly increasing")
            slopes = np.gradient(xyz, t, axis=0)
            spl = CubicHermiteSpline(t, xyz, slopes)
            self._splines[body] = (spl, spl.derivative(), spl.derivative(2))
            self._spans[body] = (t[0], t[-1])

    @property
    def mode(self) -> str:
        return "tabulated"

    @property
    def bodies(self) -> tuple[str, ...]:
        return tuple(self._splines)

    def mu(self, body: str) -> float:
        try:
            return self._mus[body]
        except KeyError:
            raise UnknownBodyError(f"no mu configured for body {body!r}") from None

    def _check(self, body: str, t: float):
        if body not in self._splines:
            raise UnknownBodyError(f"no body {body!r} in tabulated ephemeris")
        lo, hi = self._spans[body]
        if not lo <= t <= hi:
            raise TimeRangeError(
                f"time {t} outside table span [{lo}, {hi}] for {body!r}")

    def position(self, body: str, t: float) -> np.ndarray:
        self._check(body, t)
        return self._splines[body][0](t)

    def velocity(self, body: str, t: float) -> np.ndarray:
        self._check(body, t)
        return self._splines[body][1](t)

    def acceleration(self, body: str, t: float) -> np.ndarray:
        self._check(body, t)
        return self._splines[body][2](t)

    @classmethod
    def from_csv(cls, path, mus: dict[str, float] | None = None) -> "TabulatedEphemeris":
        """Load `t_s,body,x_km,y_km,z_km` rows; times strictly increasing per body."""
        rows: dict[str, list[tuple[float, float, float, float]]] = {}
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            expected = "t_s,body,x_km,y_km,z_km"
            if header != expected:
                raise ConfigError(
                    f"ephemeris CSV header {header!r}, expected {expected!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                t_s, body, x, y, z = line.split(",")
                rows.setdefault(body, []).append(
                    (float(t_s), float(x), float(y), float(z)))
        default_mus = {EARTH: constants.MU_EARTH, SUN: constants.MU_SUN}
        if mus:
            default_mus.update(mus)
        tables = {}
        for body, recs in rows.items():
            arr = np.array(recs)
            tables[body] = (arr[:, 0], arr[:, 1:4])
        return cls(tables, {b: default_mus.get(b, 0.0) for b in tables})


def body_position(provider, body: str, t: float) -> np.ndarray:
    """Position of `body` relative to the Moon at physical time t, km."""
    return provider.position(body, t)


@dataclass(frozen=True)
class FrameRotation:
    """Inertial -> Earth-Moon rotating frame map at one instant.

    matrix rows are the rotating axes expressed in inertial coordinates:
    x toward the Moon as seen from Earth, y along the Moon's velocity
    relative to Earth, z completing the triad.
    """

    matrix: np.ndarray
    matrix_dot: np.ndarray


def frame_rotation(provider, t: float) -> FrameRotation:
    """Rotating-frame basis and its time derivative from the Earth state."""
    r = provider.position(EARTH, t)
    v = provider.velocity(EARTH, t)
    a = provider.acceleration(EARTH, t)
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise SingularFrameError("Earth-Moon separation is zero")
    rhat = r / rn
    h = np.cross(r, v)
    hn = np.linalg.norm(h)
    if hn == 0.0:
        raise SingularFrameError("Earth-Moon angular momentum is zero")
    hhat = h / hn

    xhat = -rhat
    yhat = np.cross(hhat, xhat)

    rhat_dot = (v - rhat * (rhat @ v)) / rn
    hdot = np.cross(r, a)
    hhat_dot = (hdot - hhat * (hhat @ hdot)) / hn
    xhat_dot = -rhat_dot
    yhat_dot = np.cross(hhat_dot, xhat) + np.cross(hhat, xhat_dot)

    rot = np.vstack([xhat, yhat, hhat])
    rot_dot = np.vstack([xhat_dot, yhat_dot, hhat_dot])
    return FrameRotation(matrix=rot, matrix_dot=rot_dot)


class CanonicalEphemeris:
    """Ephemeris view in canonical units, bound to a scale set.

    Also owns the canonical gravitational parameters used by the dynamics
    (mu of each third body divided by mu_moon).
    """

    def __init__(self, provider, scales: CanonicalScales):
        self.provider = provider
        self.scales = scales
        self.bodies = tuple(provider.bodies)
        self.mu_canonical = {b: provider.mu(b) / scales.mu_moon for b in self.bodies}

    def position(self, body: str, t_tu: float) -> np.ndarray:
        return self.provider.position(body, t_tu * self.scales.tu) / self.scales.du

    def velocity(self, body: str, t_tu: float) -> np.ndarray:
        return self.provider.velocity(body, t_tu * self.scales.tu) / self.scales.vu


def inertial_to_rotating(state, t_tu: float, ceph: CanonicalEphemeris) -> np.ndarray:
    """Canonical inertial state to the Earth-Moon rotating frame (Moon-centered)."""
    state = np.asarray(state, dtype=float)
    fr = frame_rotation(ceph.provider, t_tu * ceph.scales.tu)
    rot = fr.matrix
    # matrix_dot carries 1/s; rescale to 1/TU
    rot_dot = fr.matrix_dot * ceph.scales.tu
    r, v = state[:3], state[3:]
    return np.concatenate([rot @ r, rot @ v + rot_dot @ r])


def rotating_to_inertial(state, t_tu: float, ceph: CanonicalEphemeris) -> np.ndarray:
    """Inverse of :func:`inertial_to_rotating`."""
    state = np.asarray(state, dtype=float)
    fr = frame_rotation(ceph.provider, t_tu * ceph.scales.tu)
    rot = fr.matrix
    rot_dot = fr.matrix_dot * ceph.scales.tu
    r_rot, v_rot = state[:3], state[3:]
    r = rot.T @ r_rot
    v = rot.T @ (v_rot - rot_dot @ r)
    return np.concatenate([r, v])
