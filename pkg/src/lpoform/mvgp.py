"""Multi-vehicle guidance problem assembly: one MPC invocation, its
linearization around a reference, and the convex subproblem handed to a
conic backend.

Three constraint modes:
  "none"        no separation content at all,
  "node"        tightened separation enforced at the control nodes only,
  "continuous"  isoperimetric slack states with relaxed continuity.

Vehicles may be cooperative (all controls optimized) or hierarchical (some
vehicles fly control sequences fixed a priori; their states remain coupled
through the separation constraints but they carry no objective terms or
targeting cones).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pathcon, socp
from .baseline import BaselineOrbit, NodeSchedule
from .dynamics import (
    AugmentedField,
    PropagateOptions,
    SrpParams,
    StackField,
    propagate,
)
from .ephemeris import CanonicalEphemeris
from .exceptions import ConfigError, ShapeError

MODES = ("none", "node", "continuous")


@dataclass(frozen=True)
class GuidanceContext:
    """Dynamics environment shared by every instance of a scenario."""

    ceph: CanonicalEphemeris
    srp: SrpParams
    options: PropagateOptions = PropagateOptions()


@dataclass
class MVGPInstance:
    """One guidance problem over N nodes for M vehicles."""

    schedule: NodeSchedule
    m: int
    x0: np.ndarray                     # (6m,) estimate at the first node
    target_pos: np.ndarray             # (m, 3) baseline positions at t_{N-1}
    target_vel: np.ndarray             # (m, 3)
    eps_r: float
    eps_v: float
    bounds: pathcon.SeparationBounds
    pairs: pathcon.PairIndex
    mode: str
    ctx: GuidanceContext
    eps_licq: float = 1e-6
    fixed_controls: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.eps_r <= 0.0 or self.eps_v <= 0.0:
            raise ConfigError("targeting radii must be positive")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (6 * self.m,):
            raise ShapeError(f"estimate shape {self.x0.shape} for m={self.m}")
        n = self.n_nodes
        for i, seq in self.fixed_controls.items():
            seq = np.asarray(seq, dtype=float)
            if seq.shape != (n, 3):
                raise ShapeError(
                    f"fixed vehicle {i} needs a ({n}, 3) control sequence")
            self.fixed_controls[i] = seq
        if not self.free_vehicles:
            raise ConfigError("at least one vehicle must be free")

    @property
    def n_nodes(self) -> int:
        return self.schedule.n_nodes

    @property
    def q(self) -> int:
        return self.pairs.q

    @property
    def naug(self) -> int:
        """Node-state dimension: slacks ride along only in continuous mode."""
        return 6 * self.m + (2 * self.q if self.mode == "continuous" else 0)

    @property
    def free_vehicles(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.m) if i not in self.fixed_controls)

    def field(self):
        if self.mode == "continuous":
            return AugmentedField(self.ctx.ceph, self.ctx.srp, self.m,
                                  self.bounds, self.pairs,
                                  self.schedule.horizon)
        return StackField(self.ctx.ceph, self.ctx.srp, self.m)

    def impulse_matrix(self) -> np.ndarray:
        """E-tilde mapping stacked controls into the node-state dimension."""
        e = np.zeros((self.naug, 3 * self.m))
        for i in range(self.m):
            e[6 * i + 3:6 * i + 6, 3 * i:3 * i + 3] = np.eye(3)
        return e

    def control_at(self, controls: np.ndarray, k: int) -> np.ndarray:
        """Full 3m control at node k with fixed sequences substituted."""
        u = np.asarray(controls[k], dtype=float).copy()
        for i, seq in self.fixed_controls.items():
            u[3 * i:3 * i + 3] = seq[k]
        return u


def build_instance(ctx: GuidanceContext, baseline, schedule: NodeSchedule,
                   x0_estimate: np.ndarray, *, eps_r: float, eps_v: float,
                   bounds: pathcon.SeparationBounds, mode: str,
                   m: int | None = None, eps_licq: float = 1e-6,
                   fixed_controls: dict[int, np.ndarray] | None = None
                   ) -> MVGPInstance:
    """Assemble an instance; targeting sets center on the baseline at the
    final node.  `baseline` is one orbit shared by all vehicles or a
    per-vehicle sequence."""
    x0_estimate = np.asarray(x0_estimate, dtype=float)
    if m is None:
        m = x0_estimate.size // 6
    baselines = list(baseline) if isinstance(baseline, (list, tuple)) \
        else [baseline] * m
    if len(baselines) != m:
        raise ConfigError(f"{len(baselines)} baselines for {m} vehicles")
    t_final = schedule.times[-1]
    target_pos = np.empty((m, 3))
    target_vel = np.empty((m, 3))
    for i, bl in enumerate(baselines):
        ref = bl.state_at(t_final)
        target_pos[i] = ref[:3]
        target_vel[i] = ref[3:]
    return MVGPInstance(schedule=schedule, m=m, x0=x0_estimate,
                        target_pos=target_pos, target_vel=target_vel,
                        eps_r=eps_r, eps_v=eps_v, bounds=bounds,
                        pairs=pathcon.PairIndex(m), mode=mode, ctx=ctx,
                        eps_licq=eps_licq,
                        fixed_controls=dict(fixed_controls or {}))


@dataclass
class Reference:
    """Node states and controls the convexification is centered on."""

    states: np.ndarray     # (N, naug)
    controls: np.ndarray   # (N, 3m), fixed vehicles included

    def copy(self) -> "Reference":
        return Reference(self.states.copy(), self.controls.copy())


def ballistic_reference(instance: MVGPInstance) -> Reference:
    """Zero-control reference: propagate the estimate across the horizon.

    Slacks start at zero and accumulate whatever violation the free drift
    produces; this is the cheapest dynamically consistent initial iterate.
    """
    n = instance.n_nodes
    naug = instance.naug
    fld = instance.field()
    states = np.zeros((n, naug))
    controls = np.zeros((n, 3 * instance.m))
    x = np.zeros(naug)
    x[:6 * instance.m] = instance.x0
    states[0] = x
    e_t = instance.impulse_matrix()
    for k in range(n - 1):
        u = instance.control_at(controls, k)
        xk = states[k] + e_t @ u
        res = propagate(xk, instance.schedule.times[k],
                        instance.schedule.times[k + 1], fld,
                        options=instance.ctx.options)
        states[k + 1] = res.state
        controls[k] = u
    controls[n - 1] = instance.control_at(controls, n - 1)
    return Reference(states=states, controls=controls)


@dataclass
class SegmentLinearization:
    """Exact-at-reference affine segment map X_{k+1} ~ phi (X_k + E U_k) + c."""

    phi: np.ndarray
    c: np.ndarray
    endpoint: np.ndarray   # nonlinear flow of the reference through the segment


def linearize_segment(instance: MVGPInstance, ref_state: np.ndarray,
                      ref_control: np.ndarray, k: int,
                      fld=None) -> SegmentLinearization:
    """STM and offset for segment k about (ref_state, ref_control).

    The variational equations start from identity after the reference
    impulse, so the defect of the linear map vanishes at the reference.
    """
    if fld is None:
        fld = instance.field()
    e_t = instance.impulse_matrix()
    x_plus = np.asarray(ref_state, dtype=float) + e_t @ np.asarray(ref_control)
    t0 = instance.schedule.times[k]
    t1 = instance.schedule.times[k + 1]
    res = propagate(x_plus, t0, t1, fld, options=instance.ctx.options, stm=True)
    c = res.state - res.stm @ x_plus
    return SegmentLinearization(phi=res.stm, c=c, endpoint=res.state)


def _position_selector(n: int, naug: int, blocks, node: int, vehicle: int,
                       k_block: str = "X") -> np.ndarray:
    row = np.zeros((3, n))
    sl = blocks[f"{k_block}_{node}"]
    for c in range(3):
        row[c, sl.start + 6 * vehicle + c] = 1.0
    return row


def assemble_subproblem(instance: MVGPInstance, ref: Reference,
                        lam: np.ndarray, w: float, delta_tr: float,
                        lins: list[SegmentLinearization] | None = None,
                        prox_weight: float = 0.0,
                        hard_dynamics: bool = False) -> socp.ConvexSubproblem:
    """Convex subproblem around `ref` with the augmented-Lagrangian penalty.

    Decision blocks per node: state X_k, free-vehicle controls U_k and their
    norm epigraphs s_k; per segment: free defect xi_k.  Objective is
    sum(s) + sum_k lam_k' xi_k + (w/2) sum_k |xi_k|^2, plus an optional
    proximal term prox_weight * |X_k - Xbar_k|^2 on the stack components.
    The proximal term breaks the tie among state moves that the linearized
    slack rows cannot distinguish (their gradient vanishes wherever the
    residual is inactive), which otherwise lets candidates ride the trust
    box for no modeled benefit.

    With hard_dynamics=True the defect slacks are dropped and the linearized
    dynamics hold exactly; this is the terminal polish used once the outer
    loop is nearly feasible, where it takes plain Newton-like steps free of
    multiplier noise.
    """
    n = instance.n_nodes
    m = instance.m
    naug = instance.naug
    free = instance.free_vehicles
    nf = len(free)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (n - 1, naug):
        raise ShapeError(f"lambda shape {lam.shape}, expected {(n - 1, naug)}")
    if ref.states.shape != (n, naug) or ref.controls.shape != (n, 3 * m):
        raise ShapeError("reference shapes inconsistent with the instance")
    if lins is None:
        fld = instance.field()
        lins = [linearize_segment(instance, ref.states[k], ref.controls[k], k, fld)
                for k in range(n - 1)]

    spb = socp.ConvexSubproblem()
    for k in range(n):
        spb.add_block(f"X_{k}", naug)
    for k in range(n):
        spb.add_block(f"U_{k}", 3 * nf)
    for k in range(n):
        spb.add_block(f"s_{k}", nf)
    if not hard_dynamics:
        for k in range(n - 1):
            spb.add_block(f"xi_{k}", naug)
    spb.finalize_variables()

    # objective
    for k in range(n):
        spb.cost[spb.blocks[f"s_{k}"]] = 1.0
    if not hard_dynamics:
        for k in range(n - 1):
            spb.cost[spb.blocks[f"xi_{k}"]] = lam[k]
            spb.pdiag[spb.blocks[f"xi_{k}"]] = w
    if prox_weight > 0.0:
        for k in range(n):
            xsl = spb.blocks[f"X_{k}"]
            stack = slice(xsl.start, xsl.start + 6 * m)
            spb.pdiag[stack] += 2.0 * prox_weight
            spb.cost[stack] += -2.0 * prox_weight * ref.states[k, :6 * m]

    e_t = instance.impulse_matrix()
    e_free = np.zeros((naug, 3 * nf))
    for col, i in enumerate(free):
        e_free[:, 3 * col:3 * col + 3] = e_t[:, 3 * i:3 * i + 3]

    # initial condition: stack pinned to the estimate, slacks start at zero
    rows = np.zeros((6 * m, spb.n))
    sl0 = spb.blocks["X_0"]
    rows[:, sl0.start:sl0.start + 6 * m] = np.eye(6 * m)
    spb.add_equality(rows, instance.x0, "initial")
    if instance.mode == "continuous":
        rows = np.zeros((2 * instance.q, spb.n))
        rows[:, sl0.start + 6 * m:sl0.stop] = np.eye(2 * instance.q)
        spb.add_equality(rows, np.zeros(2 * instance.q), "initial_slack")

    # linearized dynamics, with free defects unless polishing
    for k in range(n - 1):
        lin = lins[k]
        rows = np.zeros((naug, spb.n))
        rows[:, spb.blocks[f"X_{k + 1}"]] = np.eye(naug)
        rows[:, spb.blocks[f"X_{k}"]] = -lin.phi
        rows[:, spb.blocks[f"U_{k}"]] = -(lin.phi @ e_free)
        if not hard_dynamics:
            rows[:, spb.blocks[f"xi_{k}"]] = -np.eye(naug)
        rhs = lin.c.copy()
        ufix = np.zeros(3 * m)
        for i, seq in instance.fixed_controls.items():
            ufix[3 * i:3 * i + 3] = seq[k]
        rhs += lin.phi @ (e_t @ ufix)
        spb.add_equality(rows, rhs, "dynamics")

    # objective epigraphs: s_{i,k} >= |u_{i,k}|
    for k in range(n):
        for col, i in enumerate(free):
            a = np.zeros((4, spb.n))
            b = np.zeros(4)
            a[0, spb.blocks[f"s_{k}"].start + col] = 1.0
            usl = spb.blocks[f"U_{k}"]
            for c in range(3):
                a[1 + c, usl.start + 3 * col + c] = 1.0
            spb.add_soc(a, b, "obj_epigraph")

    # targeting cones at the final node (free vehicles)
    for col, i in enumerate(free):
        a = np.zeros((4, spb.n))
        b = np.zeros(4)
        b[0] = instance.eps_r
        a[1:, :] = _position_selector(spb.n, naug, spb.blocks, n - 1, i)
        b[1:] = -instance.target_pos[i]
        spb.add_soc(a, b, "target_pos")

        a = np.zeros((4, spb.n))
        b = np.zeros(4)
        b[0] = instance.eps_v
        xsl = spb.blocks[f"X_{n - 1}"]
        usl = spb.blocks[f"U_{n - 1}"]
        for c in range(3):
            a[1 + c, xsl.start + 6 * i + 3 + c] = 1.0
            a[1 + c, usl.start + 3 * col + c] = 1.0
        b[1:] = -instance.target_vel[i]
        spb.add_soc(a, b, "target_vel")

    # Trust region, infinity norm, nodes 0..N-2, on the post-impulse stack
    # state X_k + E U_k: that is the initial condition the segment actually
    # flows from, so it is the deviation that governs linearization
    # validity (boxing the pre-impulse state alone leaves the impulse free
    # to escape the region).  Slack components are excluded: they are
    # violation integrals, and boxing them around an infeasible reference
    # contradicts the continuity relaxation.
    n_tr = 6 * m
    for k in range(n - 1):
        xsl = spb.blocks[f"X_{k}"]
        rows = np.zeros((n_tr, spb.n))
        rows[:, xsl.start:xsl.start + n_tr] = np.eye(n_tr)
        rows[:, spb.blocks[f"U_{k}"]] = e_free[:n_tr]
        center = ref.states[k, :n_tr].copy()
        for col, i in enumerate(free):
            center[6 * i + 3:6 * i + 6] += ref.controls[k, 3 * i:3 * i + 3]
        spb.add_inequality(rows, center + delta_tr, "trust")
        spb.add_inequality(-rows, delta_tr - center, "trust")

    if instance.mode == "continuous":
        # relaxed slack continuity y_{k+1} - y_k <= eps_licq
        nq2 = 2 * instance.q
        for k in range(n - 1):
            rows = np.zeros((nq2, spb.n))
            xa = spb.blocks[f"X_{k}"]
            xb = spb.blocks[f"X_{k + 1}"]
            rows[:, xb.start + 6 * m:xb.stop] = np.eye(nq2)
            rows[:, xa.start + 6 * m:xa.stop] = -np.eye(nq2)
            spb.add_inequality(rows, np.full(nq2, instance.eps_licq),
                               "slack_licq")

    if instance.mode in ("node", "continuous"):
        # Tightened separation at the nodes: the minimum bound linearized
        # about the reference direction, the maximum bound as an exact cone.
        # In node mode these ARE the path constraints; in continuous mode
        # they are valid cuts implied by the isoperimetric condition, and
        # they give the convexification a first-order view of the boundary
        # that the clipped slack integrand cannot provide.
        min_label = "nodesep_min" if instance.mode == "node" else "nodecut_min"
        max_label = "nodesep_max" if instance.mode == "node" else "nodecut_max"
        for k in range(n):
            t_k = instance.schedule.times[k]
            lo, hi = pathcon.tightened_band(instance.bounds, t_k,
                                            instance.schedule)
            for (i, j) in instance.pairs.pairs:
                d = (ref.states[k][6 * i:6 * i + 3]
                     - ref.states[k][6 * j:6 * j + 3])
                dn = np.linalg.norm(d)
                nhat = d / dn if dn > 0.0 else np.array([0.0, 0.0, 1.0])
                row = np.zeros((1, spb.n))
                xsl = spb.blocks[f"X_{k}"]
                for c in range(3):
                    row[0, xsl.start + 6 * i + c] = -nhat[c]
                    row[0, xsl.start + 6 * j + c] = nhat[c]
                spb.add_inequality(row, np.array([-lo]), min_label)

                a = np.zeros((4, spb.n))
                b = np.zeros(4)
                b[0] = hi
                for c in range(3):
                    a[1 + c, xsl.start + 6 * i + c] = 1.0
                    a[1 + c, xsl.start + 6 * j + c] = -1.0
                spb.add_soc(a, b, max_label)

    return spb


@dataclass
class SubproblemSolution:
    states: np.ndarray      # (N, naug)
    controls: np.ndarray    # (N, 3m) with fixed sequences substituted
    xi: np.ndarray          # (N-1, naug)
    control_cost: float     # sum of |u| over free vehicles and nodes
    objective: float
    status: str
    diagnostics: dict


def solve_subproblem(spb: socp.ConvexSubproblem, backend,
                     instance: MVGPInstance) -> SubproblemSolution:
    """Run the backend and unpack named blocks; statuses map to
    optimal / infeasible / numerical-failure."""
    if not getattr(backend, "supports_quadratic", False) and np.any(spb.pdiag):
        spb = socp.lower_quadratic(spb)
    sol = backend.solve(spb)
    n = instance.n_nodes
    m = instance.m
    naug = instance.naug
    if sol.status != socp.OPTIMAL:
        return SubproblemSolution(
            states=np.zeros((n, naug)), controls=np.zeros((n, 3 * m)),
            xi=np.zeros((n - 1, naug)), control_cost=np.nan,
            objective=sol.objective, status=sol.status,
            diagnostics=sol.diagnostics)
    z = sol.x
    states = np.vstack([spb.block_value(z, f"X_{k}") for k in range(n)])
    if n > 1 and "xi_0" in spb.blocks:
        xi = np.vstack([spb.block_value(z, f"xi_{k}") for k in range(n - 1)])
    else:
        xi = np.zeros((n - 1, naug))
    free = instance.free_vehicles
    controls = np.zeros((n, 3 * m))
    for k in range(n):
        u_free = spb.block_value(z, f"U_{k}")
        for col, i in enumerate(free):
            controls[k, 3 * i:3 * i + 3] = u_free[3 * col:3 * col + 3]
        for i, seq in instance.fixed_controls.items():
            controls[k, 3 * i:3 * i + 3] = seq[k]
    cost = control_cost(instance, controls)
    return SubproblemSolution(states=states, controls=controls, xi=xi,
                              control_cost=cost, objective=sol.objective,
                              status=sol.status, diagnostics=sol.diagnostics)


def control_cost(instance: MVGPInstance, controls: np.ndarray) -> float:
    """Sum of maneuver magnitudes over free vehicles and all nodes."""
    total = 0.0
    for k in range(instance.n_nodes):
        for i in instance.free_vehicles:
            total += float(np.linalg.norm(controls[k, 3 * i:3 * i + 3]))
    return total
