import numpy as np
import pytest

from lpoform import mvgp, pathcon, scp, socp
from lpoform.baseline import schedule_nodes


@pytest.fixture(scope="module")
def backend():
    return socp.ClarabelBackend()


@pytest.fixture(scope="module")
def wide_bounds(scales):
    """Roomy band so ballistic twins never hit a constraint."""
    return pathcon.SeparationBounds(
        dr_min=0.1 / scales.du, dr_max=1e5 / scales.du,
        delta_min=0.1 / scales.du, delta_max=25.0 / scales.du,
        kappa=1e5, alpha=2.0, slack_scale=0.05 * scales.du)


def make_instance(orbit, ctx, scales, bounds, mode, n_nodes, offset_km=7.5,
                  eps_r_km=20.0):
    sched = schedule_nodes(orbit, orbit.validity[0], np.pi, n_nodes)
    x_b = orbit.state_at(sched.times[0])
    off = offset_km / scales.du
    x0 = np.concatenate([x_b + np.array([0, 0, off, 0, 0, 0]),
                         x_b + np.array([0, 0, -off, 0, 0, 0])])
    return mvgp.build_instance(ctx, orbit, sched, x0,
                               eps_r=eps_r_km / scales.du,
                               eps_v=5e-3 / scales.vu, bounds=bounds, mode=mode)


class TestEvaluateNonlinear:
    def test_exact_trajectory_zero_defects(self, orbit8, guidance_ctx, scales,
                                           wide_bounds):
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "continuous", 3, offset_km=1.0)
        ref = mvgp.ballistic_reference(inst)
        ev = scp.evaluate_nonlinear(inst, ref.states, ref.controls)
        assert ev.max_defect < 1e-9
        assert ev.cost == 0.0

    def test_cost_independent_sum(self, orbit8, guidance_ctx, scales,
                                  wide_bounds):
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "none", 3)
        ref = mvgp.ballistic_reference(inst)
        rng = np.random.default_rng(0)
        controls = rng.normal(size=(3, 6)) * 1e-5
        ev = scp.evaluate_nonlinear(inst, ref.states, controls)
        expected = sum(np.linalg.norm(controls[k, 3 * i:3 * i + 3])
                       for k in range(3) for i in range(2))
        assert np.isclose(ev.cost, expected, rtol=1e-12)

    def test_second_order_remainder_scaling(self, orbit8, guidance_ctx,
                                            scales, wide_bounds):
        """Linear-consistent perturbed candidates leave only the quadratic
        remainder; halving the perturbation quarters the defect."""
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "none", 2, offset_km=1.0)
        ref = mvgp.ballistic_reference(inst)
        lin = mvgp.linearize_segment(inst, ref.states[0], ref.controls[0], 0)
        rng = np.random.default_rng(1)
        direction = rng.normal(size=12)
        direction /= np.abs(direction).max()

        def defect_for(delta):
            states = ref.states.copy()
            states[0] = ref.states[0] + delta * direction
            e_t = inst.impulse_matrix()
            states[1] = lin.phi @ (states[0] + e_t @ ref.controls[0]) + lin.c
            ev = scp.evaluate_nonlinear(inst, states, ref.controls)
            return ev.max_defect

        d1 = defect_for(2e-4)
        d2 = defect_for(1e-4)
        assert d1 > 0
        ratio = d1 / d2
        assert 3.0 < ratio < 5.5   # ~4x per halving


class TestScpSolve:
    def test_zero_control_fixed_point(self, orbit8, guidance_ctx, scales,
                                      wide_bounds, backend):
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "continuous", 2, offset_km=1.0)
        ref = mvgp.ballistic_reference(inst)
        for i in range(2):
            inst.target_pos[i] = ref.states[1][6 * i:6 * i + 3]
            inst.target_vel[i] = ref.states[1][6 * i + 3:6 * i + 6]
        rep = scp.scp_solve(inst, backend, scp.ScpOptions())
        assert rep.converged
        assert rep.iterations <= 2
        assert rep.control_cost < 1e-9

    def test_determinism_bitwise(self, orbit8, guidance_ctx, scales,
                                 wide_bounds, backend):
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "continuous", 3)
        a = scp.scp_solve(inst, backend, scp.ScpOptions())
        b = scp.scp_solve(inst, backend, scp.ScpOptions())
        assert a.iterations == b.iterations and a.solves == b.solves
        assert a.control_cost == b.control_cost
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.controls, b.controls)
        for ra, rb in zip(a.history, b.history):
            assert ra == rb

    def test_accepted_merit_monotone_and_trust_respected(
            self, orbit8, guidance_ctx, scales, wide_bounds, backend):
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "continuous", 4)
        rep = scp.scp_solve(inst, backend, scp.ScpOptions())
        assert rep.converged
        for rec in rep.history:
            if rec.get("accepted") and rec.get("merit_after") is not None:
                assert rec["merit_after"] <= rec["merit_before"] + 1e-9
            if rec.get("accepted") and rec.get("taken") is not None:
                assert rec["taken"] <= rec["delta_tr"] * (1.0 + 1e-6)

    def test_history_is_json_lines_compatible(self, orbit8, guidance_ctx,
                                              scales, wide_bounds, backend):
        import json
        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "none", 3)
        rep = scp.scp_solve(inst, backend, scp.ScpOptions())
        for rec in rep.history:
            json.dumps(rec)
            assert {"iter", "solve", "J", "max_defect", "delta_tr",
                    "w"} <= set(rec)

    def test_failed_status_on_bad_backend(self, orbit8, guidance_ctx, scales,
                                          wide_bounds):
        class BrokenBackend:
            name = "broken"
            supports_soc = True
            supports_quadratic = True

            def solve(self, spb):
                from lpoform.exceptions import BackendError
                raise BackendError("nope")

        inst = make_instance(orbit8, guidance_ctx, scales, wide_bounds,
                             "none", 2)
        rep = scp.scp_solve(inst, BrokenBackend(), scp.ScpOptions())
        assert rep.status == scp.FAILED
