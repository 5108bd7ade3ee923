import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lpoform import baseline as bl
from lpoform import dynamics, mvgp, pathcon
from lpoform.ephemeris import AnalyticEphemeris, CanonicalEphemeris, CanonicalScales


@pytest.fixture(scope="session")
def scales():
    return CanonicalScales()


@pytest.fixture(scope="session")
def eph():
    return AnalyticEphemeris()


@pytest.fixture(scope="session")
def ceph(eph, scales):
    return CanonicalEphemeris(eph, scales)


@pytest.fixture(scope="session")
def srp(scales):
    return dynamics.SrpParams.from_physical(scales)


@pytest.fixture(scope="session")
def single_field(ceph, srp):
    return dynamics.SingleField(ceph, srp)


@pytest.fixture(scope="session")
def orbit8(ceph, single_field):
    """Default-model baseline spanning 8 revolutions (shared, ~10 s once)."""
    return bl.generate_baseline(ceph, single_field, revolutions=8)


@pytest.fixture(scope="session")
def orbit12(ceph, single_field):
    """Longer baseline for campaign runs (5 revolutions + 6-node horizon)."""
    return bl.generate_baseline(ceph, single_field, revolutions=12)


@pytest.fixture(scope="session")
def bench_bounds(scales):
    return pathcon.SeparationBounds(
        dr_min=10.0 / scales.du, dr_max=200.0 / scales.du,
        delta_min=10.0 / scales.du, delta_max=25.0 / scales.du,
        kappa=1e5, alpha=2.0, slack_scale=0.05 * scales.du)


@pytest.fixture(scope="session")
def bench_instance_factory(ceph, srp, orbit8, bench_bounds, scales):
    """Benchmark-style 2-vehicle instance builder (Table-style parameters)."""
    ctx = mvgp.GuidanceContext(ceph=ceph, srp=srp)

    def make(mode="continuous", n_nodes=6, t_start=None):
        t0 = orbit8.validity[0] if t_start is None else t_start
        sched = bl.schedule_nodes(orbit8, t0, np.pi, n_nodes)
        x_b = orbit8.state_at(sched.times[0])
        off = 1.5 * (10.0 / scales.du) / 2.0
        x0 = np.concatenate([x_b + np.array([0, 0, off, 0, 0, 0]),
                             x_b + np.array([0, 0, -off, 0, 0, 0])])
        return mvgp.build_instance(
            ctx, orbit8, sched, x0, eps_r=20.0 / scales.du,
            eps_v=5e-3 / scales.vu, bounds=bench_bounds, mode=mode)

    return make


@pytest.fixture(scope="session")
def guidance_ctx(ceph, srp):
    return mvgp.GuidanceContext(ceph=ceph, srp=srp)
