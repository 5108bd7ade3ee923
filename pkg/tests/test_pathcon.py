import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import finite_difference_jacobian

from lpoform import pathcon
from lpoform.exceptions import DegenerateScheduleError, SingularSeparationError
from lpoform.pathcon import (
    PairIndex,
    SeparationBounds,
    dense_violation_scan,
    g_max,
    g_min,
    separation,
    slack_jacobian,
    slack_rhs,
    tightened_band,
    violation_threshold,
    zeta,
)

# a plain km-unit parameter set: formulas are unit-agnostic
KM_BOUNDS = SeparationBounds(dr_min=10.0, dr_max=200.0, delta_min=10.0,
                             delta_max=25.0, kappa=1e5)
HORIZON = (0.0, 1.0)


def stack_two(r0, r1):
    out = np.zeros(12)
    out[0:3] = r0
    out[6:9] = r1
    return out


class TestBounds:
    def test_invariants(self):
        with pytest.raises(ValueError):
            SeparationBounds(dr_min=-1, dr_max=10, delta_min=0, delta_max=0,
                             kappa=1.0)
        with pytest.raises(ValueError):
            SeparationBounds(dr_min=10, dr_max=20, delta_min=6, delta_max=6,
                             kappa=1.0)
        with pytest.raises(ValueError):
            SeparationBounds(dr_min=1, dr_max=10, delta_min=1, delta_max=1,
                             kappa=1.0, alpha=1.0)

    def test_pair_index(self):
        pairs = PairIndex(4)
        assert pairs.q == 6
        assert pairs.pairs[0] == (0, 1) and pairs.pairs[-1] == (2, 3)
        with pytest.raises(ValueError):
            PairIndex(3, pairs=((0, 1), (0, 1)))
        with pytest.raises(ValueError):
            PairIndex(2, pairs=((1, 0),))


class TestZeta:
    def test_zero_at_horizon_start(self):
        assert zeta(10.0, 0.0, HORIZON, 1e5) == 0.0

    def test_direct_arithmetic_example(self):
        # kappa*tau = 5e4 per km with delta_r = 10 km
        val = zeta(10.0, 0.5, HORIZON, 1e5)
        expected = 10.0 - 1.0 / (5e4 + 1.0 / 10.0)
        assert np.isclose(val, expected, rtol=1e-14)
        assert abs(val - 9.99998) < 1e-4

    @given(tau1=st.floats(0.0, 1.0), tau2=st.floats(0.0, 1.0),
           kappa=st.floats(1.0, 1e7), delta=st.floats(0.01, 100.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_and_bounded(self, tau1, tau2, kappa, delta):
        lo, hi = min(tau1, tau2), max(tau1, tau2)
        z_lo = zeta(delta, lo, HORIZON, kappa)
        z_hi = zeta(delta, hi, HORIZON, kappa)
        assert z_lo <= z_hi + 1e-12
        assert z_hi < delta

    def test_saturates_to_delta(self):
        assert zeta(10.0, 1.0, HORIZON, 1e12) > 10.0 - 1e-9

    def test_kappa_ordering(self):
        taus = np.linspace(0.01, 1.0, 50)
        for k_small, k_big in ((1e3, 1e4), (1e4, 1e5), (1e5, 1e6)):
            z_small = np.array([zeta(10.0, t, HORIZON, k_small) for t in taus])
            z_big = np.array([zeta(10.0, t, HORIZON, k_big) for t in taus])
            assert np.all(z_big >= z_small)

    def test_degenerate_horizon(self):
        with pytest.raises(DegenerateScheduleError):
            zeta(10.0, 0.0, (2.0, 2.0), 1e5)


class TestResiduals:
    def test_coincident_at_start(self):
        x = stack_two([1, 2, 3], [1, 2, 3])
        assert g_min(x, 0.0, (0, 1), KM_BOUNDS, HORIZON) == KM_BOUNDS.dr_min

    def test_boundary_zero(self):
        t = 0.37
        z = zeta(KM_BOUNDS.delta_min, t, HORIZON, KM_BOUNDS.kappa)
        sep = KM_BOUNDS.dr_min + z
        x = stack_two([0, 0, 0], [sep, 0, 0])
        assert abs(g_min(x, t, (0, 1), KM_BOUNDS, HORIZON)) < 1e-12

    def test_random_reevaluation(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            r0, r1 = rng.normal(size=3) * 50, rng.normal(size=3) * 50
            t = float(rng.uniform(0, 1))
            x = stack_two(r0, r1)
            d = np.linalg.norm(np.asarray(r0) - np.asarray(r1))
            z_min = KM_BOUNDS.delta_min - 1.0 / (
                KM_BOUNDS.kappa * t + 1.0 / KM_BOUNDS.delta_min)
            z_max = KM_BOUNDS.delta_max - 1.0 / (
                KM_BOUNDS.kappa * t + 1.0 / KM_BOUNDS.delta_max)
            assert np.isclose(g_min(x, t, (0, 1), KM_BOUNDS, HORIZON),
                              KM_BOUNDS.dr_min + z_min - d, rtol=1e-14)
            assert np.isclose(g_max(x, t, (0, 1), KM_BOUNDS, HORIZON),
                              -KM_BOUNDS.dr_max + z_max + d, rtol=1e-14)


class TestSlackDynamics:
    def test_satisfied_gives_zero(self):
        x = stack_two([0, 0, 0], [100.0, 0, 0])
        out = slack_rhs(x, 0.5, KM_BOUNDS, PairIndex(2), HORIZON)
        assert np.all(out == 0.0)

    def test_alpha_two_square(self):
        bounds = SeparationBounds(dr_min=10.0, dr_max=200.0, delta_min=10.0,
                                  delta_max=25.0, kappa=0.0)
        # g_min = 10 - 9.5 = 0.5 at kappa = 0 (no tightening)
        x = stack_two([0, 0, 0], [9.5, 0, 0])
        out = slack_rhs(x, 0.3, bounds, PairIndex(2), HORIZON)
        assert np.isclose(out[0], 0.25, rtol=1e-14)
        assert out[1] == 0.0

    def test_quadrature_oracle(self):
        # linear-in-time separation profile crossing the minimum bound
        bounds = SeparationBounds(dr_min=10.0, dr_max=200.0, delta_min=10.0,
                                  delta_max=25.0, kappa=1e3)
        pairs = PairIndex(2)

        def sep_of_t(t):
            return 25.0 - 20.0 * t

        ts = np.linspace(0.0, 1.0, 20001)
        vals = []
        for t in ts:
            x = stack_two([0, 0, 0], [sep_of_t(t), 0, 0])
            vals.append(slack_rhs(x, t, bounds, pairs, HORIZON)[0])
        integral_trapz = np.trapezoid(vals, ts)

        # independent quadrature of the analytic integrand
        from scipy.integrate import quad

        def integrand(t):
            z = bounds.delta_min - 1.0 / (bounds.kappa * t
                                          + 1.0 / bounds.delta_min)
            return max(0.0, bounds.dr_min + z - sep_of_t(t)) ** 2

        ref, _ = quad(integrand, 0.0, 1.0, limit=200)
        assert abs(integral_trapz - ref) < 1e-8 * max(1.0, ref)

    def test_jacobian_zero_rows_when_inactive(self):
        x = stack_two([0, 0, 0], [100.0, 0, 0])
        jac = slack_jacobian(x, 0.5, KM_BOUNDS, PairIndex(2), HORIZON)
        assert np.all(jac == 0.0)

    def test_three_vehicle_structure(self):
        bounds = KM_BOUNDS
        pairs = PairIndex(3)
        x = np.zeros(18)
        x[0:3] = [0, 0, 0]
        x[6:9] = [500, 0, 0]
        x[12:15] = [2.0, 0, 0]   # pair (0,2) violates the minimum
        jac = slack_jacobian(x, 0.0, bounds, pairs, HORIZON)
        row = pairs.pairs.index((0, 2))
        assert np.any(jac[row, 0:3] != 0.0) and np.any(jac[row, 12:15] != 0.0)
        assert np.all(jac[row, 6:12] == 0.0)   # vehicle 1 untouched
        assert np.all(jac[row, 3:6] == 0.0)    # velocities untouched

    def test_finite_difference_at_violation(self):
        pairs = PairIndex(2)
        x = stack_two([0, 0, 0], [8.0, 3.0, 1.0])  # below the minimum
        t = 0.4
        jac = slack_jacobian(x, t, KM_BOUNDS, pairs, HORIZON)
        fd = finite_difference_jacobian(
            lambda y: slack_rhs(y, t, KM_BOUNDS, pairs, HORIZON), x, h=1e-6)
        assert np.allclose(jac, fd, rtol=1e-5, atol=1e-8)

    def test_coincident_active_raises(self):
        x = stack_two([1, 1, 1], [1, 1, 1])
        with pytest.raises(SingularSeparationError):
            slack_jacobian(x, 0.0, KM_BOUNDS, PairIndex(2), HORIZON)

    def test_slack_scale(self):
        scaled = SeparationBounds(dr_min=10.0, dr_max=200.0, delta_min=10.0,
                                  delta_max=25.0, kappa=0.0, slack_scale=3.0)
        x = stack_two([0, 0, 0], [9.5, 0, 0])
        out = slack_rhs(x, 0.3, scaled, PairIndex(2), HORIZON)
        assert np.isclose(out[0], (3.0 * 0.5) ** 2, rtol=1e-14)


class TestDenseScan:
    def test_constant_offset_no_violation(self):
        pairs = PairIndex(2)

        def traj(t):
            return stack_two([0, 0, 0], [15.0, 0, 0])

        rep = dense_violation_scan(traj, [0.0, 1.0], KM_BOUNDS, pairs, 64)
        assert not rep.violated and rep.max_violation == 0.0

    def test_single_crossing_interval(self):
        pairs = PairIndex(2)

        def traj(t):
            # crosses below dr_min = 10 km between t = 0.45 and 0.55
            sep = 10.0 + 50.0 * abs(t - 0.5) - 2.5
            return stack_two([0, 0, 0], [sep, 0, 0])

        rep = dense_violation_scan(traj, [0.0, 1.0], KM_BOUNDS, pairs, 512)
        assert len(rep.intervals) == 1
        iv = rep.intervals[0]
        assert iv.bound == "min"
        assert iv.t_enter < 0.5 < iv.t_exit
        assert np.isclose(rep.max_violation, 2.5, atol=0.05)

    def test_refinement_agreement(self):
        pairs = PairIndex(2)

        def traj(t):
            sep = 12.0 + 6.0 * np.sin(6.0 * t)
            return stack_two([0, 0, 0], [sep, 0, 0])

        coarse = dense_violation_scan(traj, [0.0, 1.0], KM_BOUNDS, pairs, 200)
        fine = dense_violation_scan(traj, [0.0, 1.0], KM_BOUNDS, pairs, 2000)
        assert abs(coarse.max_violation - fine.max_violation) \
            < 0.01 * fine.max_violation

    def test_tightened_mode(self):
        pairs = PairIndex(2)
        sep = 14.0   # inside the raw band but below the saturated minimum

        def traj(t):
            return stack_two([0, 0, 0], [sep, 0, 0])

        raw = dense_violation_scan(traj, [0.0, 1.0], KM_BOUNDS, pairs, 64)
        tight = dense_violation_scan(traj, [0.0, 1.0], KM_BOUNDS, pairs, 64,
                                     tightened=True)
        assert not raw.violated and tight.violated

    def test_sample_set_input(self):
        pairs = PairIndex(2)
        ts = np.linspace(0.0, 1.0, 101)
        states = np.array([stack_two([0, 0, 0], [15.0 - 10.0 * t, 0, 0])
                           for t in ts])
        rep = dense_violation_scan((ts, states), [0.0, 1.0], KM_BOUNDS,
                                   pairs, 101)
        assert rep.violated
        assert np.isclose(rep.max_violation, 5.0, atol=0.1)

    def test_report_serializable(self):
        import json
        pairs = PairIndex(2)
        rep = dense_violation_scan(
            lambda t: stack_two([0, 0, 0], [5.0, 0, 0]), [0.0, 1.0],
            KM_BOUNDS, pairs, 16)
        json.dumps(rep.to_dict())


class TestBandProperties:
    @given(t=st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_tightened_band_nonempty(self, t):
        lo, hi = tightened_band(KM_BOUNDS, t, HORIZON)
        assert lo < hi

    def test_violation_threshold(self):
        b = SeparationBounds(dr_min=10.0, dr_max=200.0, delta_min=10.0,
                             delta_max=25.0, kappa=1e5, alpha=2.0,
                             slack_scale=2.0)
        thr = violation_threshold(b, 1e-6, 0.5)
        assert np.isclose(thr, np.sqrt(1e-6 * 0.5) / 2.0, rtol=1e-12)
