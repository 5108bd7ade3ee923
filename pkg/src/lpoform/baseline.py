"""Baseline orbit storage and queries: interpolation, osculating true
anomaly, maneuver-node scheduling, and multiple-shooting correction of a
seed trajectory into the full force model.

A bundled one-period near-rectilinear halo table (9:2-resonance-like,
~6.55-day period) seeds the default baseline; any trajectory matching the
CSV schema `t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms` can be supplied
instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .dynamics import PropagateOptions, VectorField, propagate
from .ephemeris import CanonicalEphemeris, frame_rotation
from .exceptions import (
    ConfigError,
    CorrectionError,
    DegenerateOrbitError,
    DegenerateScheduleError,
    TimeRangeError,
)

_CORRECTION_OPTIONS = PropagateOptions(rtol=1e-12, atol=1e-13)


def true_anomaly(state: np.ndarray, mu: float = 1.0) -> float:
    """Osculating true anomaly in (-pi, pi] from a 6-vector state.

    atan2(h*v_r, h^2/|r| - mu) with h the angular momentum magnitude and
    v_r the radial velocity; zero at periapsis, pi at apoapsis.
    """
    state = np.asarray(state, dtype=float)
    r, v = state[:3], state[3:]
    rn = float(np.linalg.norm(r))
    h = float(np.linalg.norm(np.cross(r, v)))
    if h < 1e-12:
        raise DegenerateOrbitError(f"rectilinear orbit: |r x v| = {h:.3e}")
    v_r = float(r @ v) / rn
    sin_term = h * v_r
    cos_term = h * h / rn - mu
    if abs(sin_term) < 1e-12 and abs(cos_term) < 1e-12:
        raise DegenerateOrbitError("true anomaly undefined (circular orbit)")
    theta = math.atan2(sin_term, cos_term)
    if theta <= -math.pi:
        theta = math.pi
    return theta


@dataclass(frozen=True)
class NodeSchedule:
    """Maneuver times one revolution apart at a fixed osculating anomaly."""

    times: np.ndarray
    theta_man: float
    revolution: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.size < 1 or np.any(np.diff(t) <= 0.0):
            raise DegenerateScheduleError("node times must be strictly increasing")

    @property
    def n_nodes(self) -> int:
        return self.times.size

    @property
    def horizon(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])


class BaselineOrbit:
    """Densely sampled reference trajectory with C1 interpolation.

    Positions interpolate with the stored velocities as Hermite slopes;
    velocities use the force-model accelerations (or finite-difference
    slopes when no field is supplied).
    """

    def __init__(self, times: np.ndarray, states: np.ndarray,
                 derivs: np.ndarray | None = None, period: float | None = None):
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        if times.ndim != 1 or states.shape != (times.size, 6):
            raise ConfigError("baseline needs (n,) times and (n, 6) states")
        if times.size < 4:
            raise ConfigError("baseline needs at least 4 samples")
        if np.any(np.diff(times) <= 0.0):
            raise ConfigError("baseline times must be strictly increasing")
        if derivs is None:
            derivs = np.empty_like(states)
            derivs[:, :3] = states[:, 3:]
            derivs[:, 3:] = np.gradient(states[:, 3:], times, axis=0)
        derivs = np.asarray(derivs, dtype=float)
        self.times = times
        self.states = states
        self.derivs = derivs
        self._spline = CubicHermiteSpline(times, states, derivs)
        self.period = float(period) if period else estimate_period(times, states)

    @property
    def validity(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def _check_time(self, t):
        lo, hi = self.validity
        if np.any(np.asarray(t) < lo) or np.any(np.asarray(t) > hi):
            raise TimeRangeError(f"time {t} outside baseline span [{lo}, {hi}]")

    def state_at(self, t: float) -> np.ndarray:
        self._check_time(t)
        return self._spline(t)

    def states_at(self, ts: np.ndarray) -> np.ndarray:
        self._check_time(ts)
        return self._spline(np.asarray(ts, dtype=float))

    def verify_interpolation(self, field: VectorField, n_checks: int = 12,
                             tol_du: float = 1e-6,
                             options: PropagateOptions = _CORRECTION_OPTIONS):
        """Re-propagate to mid-sample times and compare positions.

        Raises ConfigError when the interpolation error exceeds tol_du.
        """
        idx = np.unique(np.linspace(0, self.times.size - 2, n_checks).astype(int))
        worst = 0.0
        for i in idx:
            t_mid = 0.5 * (self.times[i] + self.times[i + 1])
            res = propagate(self.states[i], self.times[i], t_mid, field,
                            options=options)
            err = float(np.linalg.norm(self._spline(t_mid)[:3] - res.state[:3]))
            worst = max(worst, err)
        if worst > tol_du:
            raise ConfigError(
                f"baseline interpolation error {worst:.3e} DU exceeds {tol_du:.1e}")
        return worst

    @classmethod
    def from_csv(cls, path, scales, period_s: float | None = None) -> "BaselineOrbit":
        times_s, states_km = load_state_csv(path)
        times = times_s / scales.tu
        states = scales.scale_state(states_km)
        period = period_s / scales.tu if period_s else None
        return cls(times, states, period=period)


def load_state_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read `t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms` into physical arrays."""
    expected = "t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms"
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != expected:
            raise ConfigError(f"state CSV header {header!r}, expected {expected!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 7:
        raise ConfigError(f"state CSV has {data.shape[1]} columns, expected 7")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0.0):
        raise ConfigError("state CSV times must be strictly increasing")
    return t, data[:, 1:7]


def estimate_period(times: np.ndarray, states: np.ndarray) -> float:
    """Median spacing of radius minima (perilune recurrence)."""
    r = np.linalg.norm(states[:, :3], axis=1)
    interior = np.flatnonzero((r[1:-1] < r[:-2]) & (r[1:-1] < r[2:])) + 1
    if interior.size >= 2:
        return float(np.median(np.diff(times[interior])))
    # fewer than two perilune passes: fall back to the sampled span
    return float(times[-1] - times[0])


def load_seed_table() -> tuple[np.ndarray, np.ndarray]:
    """Bundled one-period NRHO state table (physical units)."""
    ref = resources.files("lpoform.data") / "nrho_seed.csv"
    with resources.as_file(ref) as path:
        return load_state_csv(path)


def tile_periodic_seed(ceph: CanonicalEphemeris, times_s: np.ndarray,
                       states_km: np.ndarray, revolutions: int
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Repeat a one-period inertial seed over several revolutions.

    The seed is periodic in the Earth-Moon rotating frame, so each tile maps
    the same rotating-frame states back to inertial coordinates at shifted
    times.  Output is canonical.  The duplicated seam sample of each tile is
    dropped.
    """
    sc = ceph.scales
    period_s = times_s[-1] - times_s[0]
    n_per = times_s.size - 1

    rot_states = np.empty((n_per, 6))
    for i in range(n_per):
        fr = frame_rotation(ceph.provider, times_s[i])
        r, v = states_km[i, :3], states_km[i, 3:]
        rot_states[i, :3] = fr.matrix @ r
        rot_states[i, 3:] = fr.matrix @ v + fr.matrix_dot @ r

    n_total = revolutions * n_per + 1
    out_t = np.empty(n_total)
    out_x = np.empty((n_total, 6))
    for k in range(revolutions):
        for i in range(n_per):
            t_s = times_s[i] + k * period_s
            fr = frame_rotation(ceph.provider, t_s)
            r_rot, v_rot = rot_states[i, :3], rot_states[i, 3:]
            r = fr.matrix.T @ r_rot
            v = fr.matrix.T @ (v_rot - fr.matrix_dot @ r)
            idx = k * n_per + i
            out_t[idx] = t_s
            out_x[idx] = np.concatenate([r, v])
    out_t[-1] = times_s[0] + revolutions * period_s
    out_x[-1] = out_x[0]
    # the final sample shares the rotating state of the first one
    fr = frame_rotation(ceph.provider, out_t[-1])
    r_rot, v_rot = rot_states[0, :3], rot_states[0, 3:]
    r = fr.matrix.T @ r_rot
    v = fr.matrix.T @ (v_rot - fr.matrix_dot @ r)
    out_x[-1] = np.concatenate([r, v])

    return out_t / sc.tu, sc.scale_state(out_x)


def correct_baseline(seed_times: np.ndarray, seed_states: np.ndarray,
                     field: VectorField, *, defect_tol: float = 1e-9,
                     max_iter: int = 12, patch_per_period: int = 12,
                     period: float | None = None, tube: float | None = None,
                     dense_max_step: float | None = None) -> BaselineOrbit:
    """Multiple-shooting continuity correction of a seed trajectory.

    Patch-point states are adjusted by minimum-norm Newton steps until every
    segment defect is below defect_tol (canonical).  The result is
    re-propagated densely and returned as a BaselineOrbit.  `tube`, when
    given, bounds the allowed patch-state position deviation from the seed.
    """
    seed_times = np.asarray(seed_times, dtype=float)
    seed_states = np.asarray(seed_states, dtype=float)
    if period is None:
        period = estimate_period(seed_times, seed_states)
    span = seed_times[-1] - seed_times[0]
    patch_dt = period / patch_per_period

    idx = [0]
    for i in range(1, seed_times.size):
        if seed_times[i] - seed_times[idx[-1]] >= patch_dt * (1.0 - 1e-9):
            idx.append(i)
    if idx[-1] != seed_times.size - 1:
        idx.append(seed_times.size - 1)
    t_patch = seed_times[np.array(idx)]
    x_patch = seed_states[np.array(idx)].copy()
    n_p = t_patch.size
    n_seg = n_p - 1

    def segment_runs(with_stm):
        ends = np.empty((n_seg, 6))
        stms = np.empty((n_seg, 6, 6)) if with_stm else None
        for k in range(n_seg):
            res = propagate(x_patch[k], t_patch[k], t_patch[k + 1], field,
                            options=_CORRECTION_OPTIONS, stm=with_stm)
            ends[k] = res.state
            if with_stm:
                stms[k] = res.stm
        return ends, stms

    defect_norm = np.inf
    for it in range(max_iter + 1):
        need_stm = True
        ends, stms = segment_runs(need_stm)
        defects = ends - x_patch[1:]
        defect_norm = float(np.abs(defects).max())
        if defect_norm < defect_tol:
            break
        if it == max_iter:
            raise CorrectionError(
                f"multiple shooting stalled after {max_iter} iterations",
                final_defect=defect_norm)
        jac = np.zeros((6 * n_seg, 6 * n_p))
        for k in range(n_seg):
            jac[6 * k:6 * k + 6, 6 * k:6 * k + 6] = stms[k]
            jac[6 * k:6 * k + 6, 6 * (k + 1):6 * (k + 1) + 6] = -np.eye(6)
        rhs = -defects.ravel()
        jjt = jac @ jac.T
        delta = jac.T @ np.linalg.solve(jjt, rhs)
        x_patch += delta.reshape(n_p, 6)

    if tube is not None:
        dev = np.linalg.norm(
            (x_patch[:, :3] - seed_states[np.array(idx)][:, :3]), axis=1).max()
        if dev > tube:
            raise CorrectionError(
                f"corrected trajectory left the seed tube: {dev:.3e} DU > {tube:.3e}",
                final_defect=defect_norm)

    # dense re-propagation for interpolation-quality sampling
    if dense_max_step is None:
        dense_max_step = period / 1200.0
    dense_opts = PropagateOptions(rtol=_CORRECTION_OPTIONS.rtol,
                                  atol=_CORRECTION_OPTIONS.atol,
                                  max_step=dense_max_step)
    all_t = [np.array([t_patch[0]])]
    all_x = [x_patch[0][None, :]]
    for k in range(n_seg):
        from scipy.integrate import solve_ivp
        sol = solve_ivp(field.fun(), (t_patch[k], t_patch[k + 1]), x_patch[k],
                        method=dense_opts.method, rtol=dense_opts.rtol,
                        atol=dense_opts.atol, max_step=dense_opts.max_step)
        if not sol.success:
            raise CorrectionError(f"dense re-propagation failed: {sol.message}")
        all_t.append(sol.t[1:])
        all_x.append(sol.y[:, 1:].T)
    times = np.concatenate(all_t)
    states = np.vstack(all_x)
    # drop duplicate seam points introduced by continuity below sample spacing
    keep = np.concatenate([[True], np.diff(times) > 1e-12])
    times, states = times[keep], states[keep]
    derivs = np.empty_like(states)
    for i in range(times.size):
        derivs[i] = field.rhs(times[i], states[i])
    return BaselineOrbit(times, states, derivs=derivs, period=period)


def generate_baseline(ceph: CanonicalEphemeris, field: VectorField,
                      revolutions: int, *, seed: tuple | None = None,
                      defect_tol: float = 1e-9, tube_km: float = 2000.0,
                      verify: bool = True) -> BaselineOrbit:
    """Default baseline: tile the bundled NRHO seed and correct it in `field`."""
    if seed is None:
        seed = load_seed_table()
    times_s, states_km = seed
    t_can, x_can = tile_periodic_seed(ceph, times_s, states_km, revolutions)
    period = (times_s[-1] - times_s[0]) / ceph.scales.tu
    orbit = correct_baseline(t_can, x_can, field, defect_tol=defect_tol,
                             period=period, tube=tube_km / ceph.scales.du)
    if verify:
        orbit.verify_interpolation(field)
    return orbit


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def schedule_nodes(baseline: BaselineOrbit, t_start: float, theta_man: float,
                   n_nodes: int, *, mu: float = 1.0, tol: float = 1e-8,
                   revolution: int = 0) -> NodeSchedule:
    """First n_nodes anomaly crossings of theta_man at/after t_start.

    Crossings are bracketed on a 64-sample-per-revolution grid and refined
    by bisection on the wrapped anomaly offset; one crossing is taken per
    revolution (minimum gap of 0.6 periods).
    """
    lo, hi = baseline.validity
    if t_start < lo or t_start >= hi:
        raise TimeRangeError(f"t_start {t_start} outside baseline span")
    period = baseline.period

    def offset(t: float) -> float:
        return _wrap_angle(true_anomaly(baseline.state_at(t), mu) - theta_man)

    dt = period / 64.0
    nodes: list[float] = []
    t_prev = t_start
    f_prev = offset(t_prev)
    t_guard = -np.inf
    t = t_start
    while len(nodes) < n_nodes:
        t = t_prev + dt
        if t > hi:
            raise TimeRangeError(
                f"baseline span too short: found {len(nodes)} of {n_nodes} nodes")
        f = offset(t)
        # genuine crossing: sign change without the +-pi branch jump
        if f_prev == 0.0:
            if t_prev >= t_guard:
                nodes.append(t_prev)
                t_guard = t_prev + 0.6 * period
        elif f_prev * f < 0.0 and abs(f - f_prev) < math.pi:
            a, b, fa = t_prev, t, f_prev
            for _ in range(200):
                mid = 0.5 * (a + b)
                fm = offset(mid)
                if abs(fm) < tol:
                    a = b = mid
                    break
                if fa * fm < 0.0:
                    b = mid
                else:
                    a, fa = mid, fm
            t_cross = 0.5 * (a + b)
            if abs(offset(t_cross)) > tol:
                raise DegenerateScheduleError(
                    f"bisection failed to refine node near t={t_cross}")
            if t_cross >= t_guard and t_cross >= t_start:
                nodes.append(t_cross)
                t_guard = t_cross + 0.6 * period
        t_prev, f_prev = t, f

    times = np.array(nodes)
    gaps = np.diff(times)
    if gaps.size and (gaps.min() < 0.8 * period or gaps.max() > 1.2 * period):
        raise DegenerateScheduleError(
            f"node gaps [{gaps.min():.3f}, {gaps.max():.3f}] TU outside "
            f"20% of the nominal period {period:.3f} TU")
    return NodeSchedule(times=times, theta_man=theta_man, revolution=revolution)
