"""Spacecraft dynamics: single-vehicle force model, stacked multi-vehicle
field, isoperimetric-augmented field, and numerical propagation with
state-transition matrices.

All quantities are canonical (mu_moon = 1) unless noted.  Third-body and
solar-pressure source positions come from a :class:`CanonicalEphemeris`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import constants, pathcon
from .ephemeris import CanonicalEphemeris, CanonicalScales
from .exceptions import PropagationError, ShapeError, SingularSeparationError


@dataclass(frozen=True)
class SrpParams:
    """Cannonball solar-radiation-pressure parameters.

    p_sun is the solar pressure at 1 AU expressed as canonical acceleration
    per unit area-to-mass (m^2/kg), so p_sun * c_r * area_to_mass is the SRP
    acceleration magnitude at exactly 1 AU from the Sun.  au is the
    astronomical unit in canonical DU.
    """

    p_sun: float
    c_r: float
    area_to_mass: float
    au: float
    enabled: bool = True

    def __post_init__(self):
        if self.c_r < 0.0 or self.area_to_mass < 0.0:
            raise ValueError("c_r and area_to_mass must be non-negative")

    @property
    def strength(self) -> float:
        """Coefficient k with a_srp = k * d / |d|^3, d = r - r_sun."""
        return self.p_sun * self.c_r * self.area_to_mass * self.au**2

    @classmethod
    def from_physical(cls, scales: CanonicalScales,
                      p_sun_n_m2: float = constants.P_SUN_N_M2,
                      c_r: float = 1.3,
                      area_to_mass_m2_kg: float = 0.01,
                      au_km: float = constants.AU_KM,
                      enabled: bool = True) -> "SrpParams":
        acc_unit_km_s2 = scales.mu_moon / scales.du**2
        p_can = (p_sun_n_m2 * 1e-3) / acc_unit_km_s2   # N/m^2 * m^2/kg = m/s^2
        return cls(p_sun=p_can, c_r=c_r, area_to_mass=area_to_mass_m2_kg,
                   au=au_km / scales.du, enabled=enabled)

    @classmethod
    def disabled(cls) -> "SrpParams":
        return cls(p_sun=0.0, c_r=0.0, area_to_mass=0.0, au=1.0, enabled=False)


def hfem_rhs(x: np.ndarray, t: float, ceph: CanonicalEphemeris | None,
             srp: SrpParams) -> np.ndarray:
    """Single-vehicle state derivative: central gravity, third bodies, SRP."""
    x = np.asarray(x, dtype=float)
    r, v = x[:3], x[3:]
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise SingularSeparationError("spacecraft at the central body")
    acc = -r / rn**3
    if ceph is not None:
        for body in ceph.bodies:
            rb = ceph.position(body, t)
            d = r - rb
            dn = np.linalg.norm(d)
            if dn == 0.0:
                raise SingularSeparationError(f"spacecraft coincides with {body}")
            mu_b = ceph.mu_canonical[body]
            acc = acc - mu_b * (d / dn**3 + rb / np.linalg.norm(rb) ** 3)
        if srp.enabled:
            rs = ceph.position("sun", t)
            d = r - rs
            dn = np.linalg.norm(d)
            if dn == 0.0:
                raise SingularSeparationError("spacecraft coincides with sun")
            acc = acc + srp.strength * d / dn**3
    return np.concatenate([v, acc])


def _point_mass_gradient(d: np.ndarray, coeff: float) -> np.ndarray:
    """d(coeff * d/|d|^3)/dr for d = r - r_source."""
    dn = np.linalg.norm(d)
    return coeff * (np.eye(3) / dn**3 - 3.0 * np.outer(d, d) / dn**5)


def hfem_gravity_gradient(x: np.ndarray, t: float,
                          ceph: CanonicalEphemeris | None,
                          srp: SrpParams) -> np.ndarray:
    """3x3 gradient of the acceleration with respect to position."""
    x = np.asarray(x, dtype=float)
    r = x[:3]
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise SingularSeparationError("spacecraft at the central body")
    g = 3.0 * np.outer(r, r) / rn**5 - np.eye(3) / rn**3
    if ceph is not None:
        for body in ceph.bodies:
            rb = ceph.position(body, t)
            d = r - rb
            if np.linalg.norm(d) == 0.0:
                raise SingularSeparationError(f"spacecraft coincides with {body}")
            g = g + _point_mass_gradient(d, -ceph.mu_canonical[body])
        if srp.enabled:
            d = r - ceph.position("sun", t)
            g = g + _point_mass_gradient(d, srp.strength)
    return g


def hfem_jacobian(x: np.ndarray, t: float, ceph: CanonicalEphemeris | None,
                  srp: SrpParams) -> np.ndarray:
    """6x6 Jacobian of :func:`hfem_rhs`."""
    jac = np.zeros((6, 6))
    jac[0:3, 3:6] = np.eye(3)
    jac[3:6, 0:3] = hfem_gravity_gradient(x, t, ceph, srp)
    return jac


def _check_stack(X: np.ndarray, m: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if m < 1:
        raise ShapeError(f"vehicle count must be >= 1, got {m}")
    if X.shape != (6 * m,):
        raise ShapeError(f"stack state has shape {X.shape}, expected ({6 * m},)")
    return X


def stack_rhs(X: np.ndarray, t: float, ceph: CanonicalEphemeris | None,
              srp: SrpParams, m: int) -> np.ndarray:
    """Concatenated M-vehicle state derivative."""
    X = _check_stack(X, m)
    out = np.empty(6 * m)
    for i in range(m):
        out[6 * i:6 * i + 6] = hfem_rhs(X[6 * i:6 * i + 6], t, ceph, srp)
    return out


def stack_jacobian(X: np.ndarray, t: float, ceph: CanonicalEphemeris | None,
                   srp: SrpParams, m: int) -> np.ndarray:
    """Block-diagonal 6M x 6M Jacobian; off-diagonal blocks exactly zero."""
    X = _check_stack(X, m)
    out = np.zeros((6 * m, 6 * m))
    for i in range(m):
        sl = slice(6 * i, 6 * i + 6)
        out[sl, sl] = hfem_jacobian(X[sl], t, ceph, srp)
    return out


def apply_impulse(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Instantaneous velocity change: r unchanged, v += u."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[3:6] += np.asarray(u, dtype=float)
    return out


def apply_stack_impulse(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Stack version: adds E @ U with E = block-diag([0; I3])."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    m = U.size // 3
    if X.size < 6 * m or U.size != 3 * m:
        raise ShapeError(f"impulse shape {U.shape} incompatible with stack {X.shape}")
    out = X.copy()
    for i in range(m):
        out[6 * i + 3:6 * i + 6] += U[3 * i:3 * i + 3]
    return out


class VectorField:
    """A right-hand side with Jacobian, over a flat n-dimensional state.

    Subclasses may provide compiled fast paths through `fun`/`var_fun`;
    the default wraps the numpy implementations.
    """

    dim: int

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fun(self):
        """Callable f(t, y) for the integrator."""
        return self.rhs

    def var_fun(self):
        """Callable for the joint state + STM system of size dim*(dim+1)."""
        n = self.dim

        def f(t, z):
            x = z[:n]
            phi = z[n:].reshape(n, n)
            dx = self.rhs(t, x)
            dphi = self.jacobian(t, x) @ phi
            return np.concatenate([dx, dphi.ravel()])

        return f


def _try_pack(ceph, srp):
    if ceph is None:
        return None
    from . import accel
    return accel.pack_ephemeris(ceph, srp)


class StackField(VectorField):
    """M vehicles, block-diagonal.

    On an analytic ephemeris the integrator callables come from the compiled
    kernels in `accel`; otherwise the numpy implementations are used.
    """

    def __init__(self, ceph: CanonicalEphemeris | None, srp: SrpParams, m: int):
        self.ceph = ceph
        self.srp = srp
        self.m = m
        self.dim = 6 * m
        self._ep = _try_pack(ceph, srp)

    def rhs(self, t, X):
        return stack_rhs(X, t, self.ceph, self.srp, self.m)

    def jacobian(self, t, X):
        return stack_jacobian(X, t, self.ceph, self.srp, self.m)

    def fun(self):
        if self._ep is None:
            return self.rhs
        from . import accel
        return accel.stack_callables(self._ep, self.m)[0]

    def var_fun(self):
        if self._ep is None:
            return super().var_fun()
        from . import accel
        return accel.stack_callables(self._ep, self.m)[1]


class SingleField(StackField):
    """One vehicle in the full force model."""

    def __init__(self, ceph: CanonicalEphemeris | None, srp: SrpParams):
        super().__init__(ceph, srp, 1)

    def rhs(self, t, x):
        return hfem_rhs(x, t, self.ceph, self.srp)

    def jacobian(self, t, x):
        return hfem_jacobian(x, t, self.ceph, self.srp)


class AugmentedField(VectorField):
    """Stack plus 2q isoperimetric slack states.

    State layout: [X (6M), y_min (q), y_max (q)].  Slack derivatives are the
    clipped, tightened separation residuals raised to the alpha power, so
    slacks are non-decreasing along any trajectory.
    """

    def __init__(self, ceph: CanonicalEphemeris | None, srp: SrpParams, m: int,
                 bounds: pathcon.SeparationBounds, pairs: pathcon.PairIndex,
                 horizon: tuple[float, float]):
        self.ceph = ceph
        self.srp = srp
        self.m = m
        self.bounds = bounds
        self.pairs = pairs
        self.horizon = (float(horizon[0]), float(horizon[1]))
        self.dim = 6 * m + 2 * pairs.q
        self._ep = _try_pack(ceph, srp)

    def rhs(self, t, z):
        z = np.asarray(z, dtype=float)
        X = z[:6 * self.m]
        dx = stack_rhs(X, t, self.ceph, self.srp, self.m)
        dy = pathcon.slack_rhs(X, t, self.bounds, self.pairs, self.horizon)
        return np.concatenate([dx, dy])

    def jacobian(self, t, z):
        z = np.asarray(z, dtype=float)
        n6m = 6 * self.m
        X = z[:n6m]
        out = np.zeros((self.dim, self.dim))
        out[:n6m, :n6m] = stack_jacobian(X, t, self.ceph, self.srp, self.m)
        out[n6m:, :n6m] = pathcon.slack_jacobian(
            X, t, self.bounds, self.pairs, self.horizon)
        return out

    def _packed(self):
        from . import accel
        pp = accel.pack_path(self.bounds, self.horizon)
        pairs = np.array(self.pairs.pairs, dtype=np.int64).reshape(-1, 2)
        return accel.augmented_callables(self._ep, self.m, pp, pairs)

    def fun(self):
        if self._ep is None:
            return self.rhs
        return self._packed()[0]

    def var_fun(self):
        if self._ep is None:
            return super().var_fun()
        return self._packed()[1]


@dataclass
class PropagationResult:
    """Terminal state of an initial value problem, with optional STM."""

    state: np.ndarray
    stm: np.ndarray | None
    t0: float
    t1: float
    steps: int
    nfev: int
    dense: object = None   # scipy OdeSolution over the state part, if requested

    def state_at(self, t):
        if self.dense is None:
            raise ValueError("propagation was run without dense output")
        out = np.asarray(self.dense(t))
        return out


@dataclass(frozen=True)
class PropagateOptions:
    rtol: float = 1e-11
    atol: float = 1e-12
    method: str = "DOP853"
    max_step: float = np.inf


_DEFAULT_OPTIONS = PropagateOptions()


def propagate(x0: np.ndarray, t0: float, t1: float, field: VectorField,
              options: PropagateOptions | None = None, *, stm: bool = False,
              dense: bool = False) -> PropagationResult:
    """Integrate `field` from t0 to t1 (either direction).

    With stm=True the variational equations run alongside the state and the
    result carries Phi(t1, t0), initialized at identity.
    """
    opts = options or _DEFAULT_OPTIONS
    x0 = np.asarray(x0, dtype=float)
    n = field.dim
    if x0.shape != (n,):
        raise ShapeError(f"initial state shape {x0.shape}, field dimension {n}")

    if t1 == t0:
        return PropagationResult(state=x0.copy(),
                                 stm=np.eye(n) if stm else None,
                                 t0=t0, t1=t1, steps=0, nfev=0)

    if stm:
        z0 = np.concatenate([x0, np.eye(n).ravel()])
        fun = field.var_fun()
    else:
        z0 = x0
        fun = field.fun()

    sol = solve_ivp(fun, (t0, t1), z0, method=opts.method, rtol=opts.rtol,
                    atol=opts.atol, max_step=opts.max_step, dense_output=dense)
    if not sol.success:
        raise PropagationError(
            f"integration stopped at t={sol.t[-1]:.6g}: {sol.message}",
            last_time=sol.t[-1])
    zf = sol.y[:, -1]
    if not np.all(np.isfinite(zf)):
        raise PropagationError(
            f"non-finite state at t={sol.t[-1]:.6g}", last_time=sol.t[-1])

    state = zf[:n]
    phi = zf[n:].reshape(n, n) if stm else None
    dense_sol = None
    if dense:
        if stm:
            dense_sol = _StateSlice(sol.sol, n)
        else:
            dense_sol = sol.sol
    return PropagationResult(state=state, stm=phi, t0=t0, t1=t1,
                             steps=sol.t.size - 1, nfev=sol.nfev,
                             dense=dense_sol)


class _StateSlice:
    """Dense-output view restricted to the state part of a variational run."""

    def __init__(self, sol, n):
        self._sol = sol
        self._n = n

    def __call__(self, t):
        out = self._sol(t)
        return out[:self._n] if out.ndim == 1 else out[:self._n, :]


def kepler_energy(x: np.ndarray, mu: float = 1.0) -> float:
    """Two-body specific energy, used by conservation checks."""
    x = np.asarray(x, dtype=float)
    return 0.5 * float(x[3:] @ x[3:]) - mu / float(np.linalg.norm(x[:3]))


def srp_acceleration(x: np.ndarray, t: float, ceph: CanonicalEphemeris,
                     srp: SrpParams) -> np.ndarray:
    """SRP term in isolation (diagnostics and tests)."""
    r = np.asarray(x, dtype=float)[:3]
    d = r - ceph.position("sun", t)
    dn = np.linalg.norm(d)
    return srp.strength * d / dn**3


def _third_body_accel(r: np.ndarray, rb: np.ndarray, mu_b: float) -> np.ndarray:
    d = r - rb
    return -mu_b * (d / np.linalg.norm(d) ** 3 + rb / np.linalg.norm(rb) ** 3)


def third_body_acceleration(x: np.ndarray, t: float, ceph: CanonicalEphemeris,
                            body: str) -> np.ndarray:
    """One body's direct + indirect acceleration (diagnostics and tests)."""
    r = np.asarray(x, dtype=float)[:3]
    return _third_body_accel(r, ceph.position(body, t), ceph.mu_canonical[body])
