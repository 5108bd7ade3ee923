import numpy as np
import pytest

from lpoform import socp
from lpoform.exceptions import ShapeError


def _projection_problem():
    """min |x - a| by epigraph cone, x pinned to b by equality."""
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([1.1, 2.2, 2.9])
    spb = socp.ConvexSubproblem()
    spb.add_block("x", 3)
    spb.add_block("t", 1)
    spb.finalize_variables()
    spb.cost[3] = 1.0
    rows = np.hstack([np.eye(3), np.zeros((3, 1))])
    spb.add_equality(rows, b, "pin")
    cone_a = np.zeros((4, 4))
    cone_a[0, 3] = 1.0
    cone_a[1:, :3] = np.eye(3)
    cone_b = np.concatenate([[0.0], -a])
    spb.add_soc(cone_a, cone_b, "epigraph")
    return spb, np.linalg.norm(b - a)


@pytest.mark.parametrize("backend_name", ["clarabel", "scs"])
def test_projection_both_backends(backend_name):
    spb, expected = _projection_problem()
    backend = socp.make_backend(backend_name)
    sol = backend.solve(spb)
    assert sol.status == socp.OPTIMAL
    assert abs(sol.objective - expected) < 1e-6
    assert abs(spb.block_value(sol.x, "t")[0] - expected) < 1e-6


def test_infeasible_detected():
    spb = socp.ConvexSubproblem()
    spb.add_block("x", 1)
    spb.finalize_variables()
    spb.add_inequality(np.array([[1.0]]), np.array([0.0]), "le")   # x <= 0
    spb.add_inequality(np.array([[-1.0]]), np.array([-1.0]), "ge")  # x >= 1
    sol = socp.ClarabelBackend().solve(spb)
    assert sol.status == socp.INFEASIBLE


def test_quadratic_native_vs_lowered():
    # min (w/2)|x - c|^2 with x free
    c = np.array([0.3, -0.7])
    w = 5.0
    spb = socp.ConvexSubproblem()
    spb.add_block("x", 2)
    spb.finalize_variables()
    spb.pdiag[:] = w
    spb.cost[:] = -w * c

    native = socp.ClarabelBackend().solve(spb)
    assert np.allclose(native.x, c, atol=1e-7)

    lowered = socp.lower_quadratic(spb)
    assert lowered.count_cones("quad_epigraph") == 1
    sol = socp.ClarabelBackend().solve(lowered)
    assert np.allclose(sol.x[:2], c, atol=1e-6)


def test_counts_and_dump():
    spb, _ = _projection_problem()
    assert spb.count_rows("pin") == 3
    assert spb.count_cones("epigraph") == 1
    dump = spb.to_conic_dump()
    assert "block x 0 3" in dump
    assert "soc 0 dim 4 epigraph" in dump
    assert "eqrhs" in dump


def test_shape_validation():
    spb = socp.ConvexSubproblem()
    spb.add_block("x", 2)
    spb.finalize_variables()
    with pytest.raises(ShapeError):
        spb.add_equality(np.zeros((1, 3)), np.zeros(1), "bad")
    with pytest.raises(ShapeError):
        spb.add_block("x", 1)


def test_backend_capability_flags():
    cb = socp.ClarabelBackend()
    sb = socp.ScsBackend()
    assert cb.supports_soc and cb.supports_quadratic
    assert sb.supports_soc and sb.supports_quadratic
    with pytest.raises(Exception):
        socp.make_backend("nonexistent")
