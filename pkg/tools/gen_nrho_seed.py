"""Generate the bundled near-rectilinear halo seed table.

Differentially corrects a southern L2 halo with ~6.55-day period in the
Earth-Moon circular restricted three-body problem, then samples one period
and writes it as a Moon-centered inertial state table matching the baseline
CSV schema.  Run from the repository root:

    python tools/gen_nrho_seed.py
"""

import pathlib
import sys

import numpy as np
from scipy.integrate import solve_ivp

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from lpoform import constants  # noqa: E402

MU = constants.MU_MOON / (constants.MU_MOON + constants.MU_EARTH)
L_KM = constants.EARTH_MOON_DIST_KM
T_S = np.sqrt(L_KM**3 / (constants.MU_MOON + constants.MU_EARTH))
V_KMS = L_KM / T_S


def cr3bp_rhs(t, s):
    x, y, z, vx, vy, vz = s[:6]
    r1 = np.sqrt((x + MU) ** 2 + y**2 + z**2)
    r2 = np.sqrt((x - 1 + MU) ** 2 + y**2 + z**2)
    ax = x + 2 * vy - (1 - MU) * (x + MU) / r1**3 - MU * (x - 1 + MU) / r2**3
    ay = y - 2 * vx - (1 - MU) * y / r1**3 - MU * y / r2**3
    az = -(1 - MU) * z / r1**3 - MU * z / r2**3
    return [vx, vy, vz, ax, ay, az]


def cr3bp_jac(s):
    x, y, z = s[:3]
    a = np.zeros((6, 6))
    a[0:3, 3:6] = np.eye(3)
    a[3, 4] = 2.0
    a[4, 3] = -2.0
    for mu_i, xc in ((1 - MU, -MU), (MU, 1 - MU)):
        d = np.array([x - xc, y, z])
        dn = np.linalg.norm(d)
        a[3:6, 0:3] += mu_i * (3 * np.outer(d, d) / dn**5 - np.eye(3) / dn**3)
    a[3, 0] += 1.0
    a[4, 1] += 1.0
    return a


def cr3bp_var_rhs(t, zz):
    s = zz[:6]
    phi = zz[6:].reshape(6, 6)
    ds = cr3bp_rhs(t, s)
    dphi = cr3bp_jac(s) @ phi
    return np.concatenate([ds, dphi.ravel()])


def to_half_crossing(state0, t_guess):
    """Integrate with STM to the next y = 0 crossing."""
    z0 = np.concatenate([state0, np.eye(6).ravel()])

    def event(t, zz):
        return zz[1]
    event.terminal = True
    event.direction = -np.sign(state0[4])  # leave, come back through y=0

    sol = solve_ivp(cr3bp_var_rhs, (0.0, 3.0 * t_guess), z0, rtol=1e-12,
                    atol=1e-13, method="DOP853", events=event)
    if not sol.t_events[0].size:
        raise RuntimeError("no y=0 crossing found")
    t_c = sol.t_events[0][0]
    z_c = sol.y_events[0][0]
    return t_c, z_c[:6], z_c[6:].reshape(6, 6)


def correct_halo(x0, z0, vy0, t_half_guess=0.76, iters=30):
    """Fix z0; adjust x0, vy0 for a perpendicular second crossing."""
    for _ in range(iters):
        s0 = np.array([x0, 0.0, z0, 0.0, vy0, 0.0])
        t_c, s_c, phi = to_half_crossing(s0, t_half_guess)
        vx_c, vz_c = s_c[3], s_c[5]
        if max(abs(vx_c), abs(vz_c)) < 1e-13:
            return s0, 2.0 * t_c
        acc = cr3bp_rhs(t_c, s_c)[3:6]
        vy_c = s_c[4]
        a_mat = np.array([[phi[3, 0], phi[3, 4]],
                          [phi[5, 0], phi[5, 4]]])
        a_mat -= np.outer([acc[0], acc[2]], [phi[1, 0], phi[1, 4]]) / vy_c
        dx, dvy = np.linalg.solve(a_mat, -np.array([vx_c, vz_c]))
        x0 += dx
        vy0 += dvy
    raise RuntimeError(f"halo correction stalled: |vx|={vx_c:.2e} |vz|={vz_c:.2e}")


def rotating_to_moon_inertial(t_nd, s_rot):
    """CR3BP rotating barycentric nondim -> Moon-centered inertial (km, km/s)."""
    theta = t_nd  # nondim rotation rate is 1
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # inertial->rotating
    r_rel = (s_rot[:3] - np.array([1 - MU, 0.0, 0.0]))
    v_rel = s_rot[3:6]
    omega = np.array([0.0, 0.0, 1.0])
    r_in = rot.T @ r_rel
    v_in = rot.T @ (v_rel + np.cross(omega, r_rel))
    return np.concatenate([r_in * L_KM, v_in * V_KMS])


def main():
    s0, period = correct_halo(1.02202815, -0.18206, -0.10317)
    print(f"corrected IC: {s0}")
    print(f"period: {period:.9f} nd = {period * T_S / 86400.0:.6f} days")

    sol = solve_ivp(cr3bp_rhs, (0.0, period), s0, rtol=1e-12, atol=1e-13,
                    method="DOP853", dense_output=True)
    closure = np.abs(sol.y[:, -1] - s0).max()
    print(f"periodicity closure: {closure:.3e}")

    rr = np.linalg.norm(sol.y[:3, :].T - np.array([1 - MU, 0, 0]), axis=1)
    print(f"perilune radius: {rr.min() * L_KM:.1f} km, "
          f"apolune: {rr.max() * L_KM:.1f} km")

    n_samp = 512
    ts = np.linspace(0.0, period, n_samp + 1)
    out = pathlib.Path(__file__).resolve().parents[1] / "src/lpoform/data/nrho_seed.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms\n")
        for t_nd in ts:
            st = rotating_to_moon_inertial(t_nd, sol.sol(t_nd))
            fh.write(f"{t_nd * T_S:.10e}," + ",".join(f"{v:.16e}" for v in st) + "\n")
    print(f"wrote {out} ({n_samp + 1} samples)")


if __name__ == "__main__":
    main()
