"""Recursive MPC Monte Carlo harness.

Each sample inserts the formation with noise, then loops revolutions:
corrupt the state estimate, solve the guidance problem, execute the first
maneuver through the Gates error model, propagate truth to the next node,
and record dense separation traces and statistics.

Common-random-numbers discipline: one counter-based stream per (sample,
vehicle, error type), with a fixed draw order per revolution, so campaigns
in different constraint modes see identical noise realizations seed for
seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import pathcon, scp, socp
from .baseline import BaselineOrbit, NodeSchedule
from .dynamics import StackField, apply_stack_impulse, propagate
from .ephemeris import frame_rotation
from .exceptions import ConfigError, PropagationError
from .mvgp import GuidanceContext, build_instance

SCHEMA_VERSION = 1

ERR_INSERTION, ERR_NAV, ERR_GATES = 0, 1, 2


@dataclass(frozen=True)
class ErrorConfig:
    """1-sigma noise levels in canonical units (configs quote 3-sigma)."""

    sigma_r0: float = 0.0
    sigma_v0: float = 0.0
    sigma_r_nav: float = 0.0
    sigma_v_nav: float = 0.0
    sigma_rel: float = 0.0
    sigma_abs: float = 0.0
    sigma_phi: float = 0.0

    def __post_init__(self):
        for name in ("sigma_r0", "sigma_v0", "sigma_r_nav", "sigma_v_nav",
                     "sigma_rel", "sigma_abs", "sigma_phi"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")

    @classmethod
    def from_physical_3sigma(cls, scales, *, r0_km=1.0, v0_cms=1.0,
                             r_nav_km=0.1, v_nav_cms=1.0, rel_pct=1.5,
                             abs_mms=1.42, dir_deg=0.5) -> "ErrorConfig":
        """Table-style 3-sigma physical values to 1-sigma canonical."""
        return cls(
            sigma_r0=(r0_km / 3.0) / scales.du,
            sigma_v0=(v0_cms * 1e-5 / 3.0) / scales.vu,
            sigma_r_nav=(r_nav_km / 3.0) / scales.du,
            sigma_v_nav=(v_nav_cms * 1e-5 / 3.0) / scales.vu,
            sigma_rel=(rel_pct / 100.0) / 3.0,
            sigma_abs=(abs_mms * 1e-6 / 3.0) / scales.vu,
            sigma_phi=np.deg2rad(dir_deg) / 3.0,
        )


@dataclass
class FormationConfig:
    """Vehicle count, initial offsets, and campaign extent."""

    m: int
    offsets: np.ndarray            # (m, 6) canonical offsets from baseline
    revolutions: int = 5
    samples: int = 20
    mode: str = "continuous"
    hierarchical: bool = False     # vehicle 0 flies a pre-solved sequence

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float)
        if self.m < 2:
            raise ConfigError(f"formation needs at least 2 vehicles, got {self.m}")
        if self.offsets.shape != (self.m, 6):
            raise ConfigError(f"offsets shape {self.offsets.shape}, "
                              f"expected ({self.m}, 6)")

    @classmethod
    def two_vehicle_default(cls, dr_min: float, **kw) -> "FormationConfig":
        """+-1.5*dr_min/2 offsets along the third position axis."""
        off = 1.5 * dr_min / 2.0
        offsets = np.zeros((2, 6))
        offsets[0, 2] = off
        offsets[1, 2] = -off
        return cls(m=2, offsets=offsets, **kw)


def stream(seed: int, sample: int, vehicle: int, err_type: int) -> np.random.Generator:
    """Deterministic, independent generator per (sample, vehicle, error type)."""
    ss = np.random.SeedSequence(entropy=seed,
                                spawn_key=(sample, vehicle, err_type))
    return np.random.Generator(np.random.PCG64(ss))


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    ax = np.array([[0.0, -axis[2], axis[1]],
                   [axis[2], 0.0, -axis[0]],
                   [-axis[1], axis[0], 0.0]])
    return c * np.eye(3) + s * ax + (1.0 - c) * np.outer(axis, axis)


def gates_corrupt(u: np.ndarray, errors: ErrorConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Gates execution error: relative and absolute magnitude noise, then a
    rotation by a normal angle about a uniformly random axis.

    Draw order is fixed (relative 1, absolute 3, axis 3, angle 1) so streams
    stay aligned across modes.
    """
    u = np.asarray(u, dtype=float)
    du_rel = errors.sigma_rel * rng.standard_normal()
    du_abs = errors.sigma_abs * rng.standard_normal(3)
    axis = rng.standard_normal(3)
    angle = errors.sigma_phi * rng.standard_normal()
    nrm = np.linalg.norm(axis)
    axis = axis / nrm if nrm > 0.0 else np.array([0.0, 0.0, 1.0])
    return _rodrigues(axis, angle) @ (u * (1.0 + du_rel) + du_abs)


def initialize_truth(baseline: BaselineOrbit, t0: float,
                     formation: FormationConfig, errors: ErrorConfig,
                     seed: int, sample: int) -> np.ndarray:
    """Baseline state plus per-vehicle offset and insertion noise."""
    x_b = baseline.state_at(t0)
    out = np.empty(6 * formation.m)
    for i in range(formation.m):
        rng = stream(seed, sample, i, ERR_INSERTION)
        noise = np.concatenate([
            errors.sigma_r0 * rng.standard_normal(3),
            errors.sigma_v0 * rng.standard_normal(3),
        ])
        out[6 * i:6 * i + 6] = x_b + formation.offsets[i] + noise
    return out


def corrupt_estimate(truth: np.ndarray, errors: ErrorConfig, rngs,
                     m: int) -> np.ndarray:
    """Additive navigation noise, independent per vehicle."""
    est = np.asarray(truth, dtype=float).copy()
    for i in range(m):
        est[6 * i:6 * i + 3] += errors.sigma_r_nav * rngs[i].standard_normal(3)
        est[6 * i + 3:6 * i + 6] += errors.sigma_v_nav * rngs[i].standard_normal(3)
    return est


@dataclass
class RevolutionRecord:
    revolution: int
    status: str
    iterations: int
    solves: int
    planned_cost: float
    executed: np.ndarray       # (m, 3) canonical, after Gates corruption
    commanded: np.ndarray      # (m, 3) canonical, before corruption
    fallback: bool
    estimate: np.ndarray
    truth: np.ndarray


@dataclass
class SampleRecord:
    sample: int
    times: np.ndarray          # dense trace times (TU)
    ranges: np.ndarray         # (n_times, q) separations (DU)
    rel_positions: np.ndarray  # (n_times, q, 3) rotating-frame relative (DU)
    revolutions: list[RevolutionRecord]
    violation: pathcon.ViolationReport
    failed: bool

    @property
    def any_violation(self) -> bool:
        return self.violation.violated

    def violated_revolutions(self, node_times) -> set[int]:
        out = set()
        for iv in self.violation.intervals:
            for j in range(len(node_times) - 1):
                if iv.t_enter < node_times[j + 1] and iv.t_exit > node_times[j]:
                    out.add(j)
        return out


@dataclass
class CampaignSetup:
    """Everything a campaign run needs, prebuilt in canonical units."""

    ctx: GuidanceContext
    baseline: BaselineOrbit
    schedule: NodeSchedule         # revolutions + horizon nodes
    horizon_nodes: int
    formation: FormationConfig
    bounds: pathcon.SeparationBounds
    eps_r: float
    eps_v: float
    eps_r_hier: float | None = None
    eps_licq: float = 1e-6
    errors: ErrorConfig = field(default_factory=ErrorConfig)
    scp_options: scp.ScpOptions = field(default_factory=scp.ScpOptions)
    backend_name: str = "clarabel"
    seed: int = 0
    trace_per_revolution: int = 240

    def __post_init__(self):
        needed = self.formation.revolutions + self.horizon_nodes
        if self.schedule.n_nodes < needed:
            raise ConfigError(
                f"schedule has {self.schedule.n_nodes} nodes, campaign needs "
                f"{needed}")


def _solve_revolution(setup: CampaignSetup, estimate: np.ndarray, j: int,
                      backend):
    """One MPC invocation at revolution j (cooperative or hierarchical)."""
    n = setup.horizon_nodes
    sched = NodeSchedule(times=setup.schedule.times[j:j + n],
                         theta_man=setup.schedule.theta_man, revolution=j)
    fixed = None
    if setup.formation.hierarchical:
        # vehicle 0 solves its own station-keeping problem first
        solo = build_instance(setup.ctx, setup.baseline, sched,
                              estimate[0:6], m=1, eps_r=setup.eps_r,
                              eps_v=setup.eps_v, bounds=setup.bounds,
                              mode="none", eps_licq=setup.eps_licq)
        rep0 = scp.scp_solve(solo, backend, setup.scp_options)
        if not rep0.converged:
            return None, rep0
        fixed = {0: rep0.controls.reshape(-1, 3)}
    eps_r = setup.eps_r
    if setup.formation.hierarchical and setup.eps_r_hier is not None:
        eps_r = setup.eps_r_hier
    inst = build_instance(setup.ctx, setup.baseline, sched, estimate,
                          m=setup.formation.m, eps_r=eps_r, eps_v=setup.eps_v,
                          bounds=setup.bounds, mode=setup.formation.mode,
                          eps_licq=setup.eps_licq, fixed_controls=fixed)
    report = scp.scp_solve(inst, backend, setup.scp_options)
    return inst, report


def run_sample(setup: CampaignSetup, sample: int) -> SampleRecord:
    """Simulate one Monte Carlo sample across all revolutions."""
    m = setup.formation.m
    pairs = pathcon.PairIndex(m)
    truth_field = StackField(setup.ctx.ceph, setup.ctx.srp, m)
    backend = socp.make_backend(setup.backend_name)
    node_times = setup.schedule.times
    t0 = node_times[0]

    nav_rngs = [stream(setup.seed, sample, i, ERR_NAV) for i in range(m)]
    gates_rngs = [stream(setup.seed, sample, i, ERR_GATES) for i in range(m)]

    truth = initialize_truth(setup.baseline, t0, setup.formation,
                             setup.errors, setup.seed, sample)

    times_list, range_list, rel_list = [], [], []
    revs: list[RevolutionRecord] = []
    prev_plan: np.ndarray | None = None
    failed = False

    for j in range(setup.formation.revolutions):
        estimate = corrupt_estimate(truth, setup.errors, nav_rngs, m)
        inst, report = _solve_revolution(setup, estimate, j, backend)

        fallback = not report.converged
        if not fallback:
            commanded = report.controls[0].reshape(m, 3).copy()
            prev_plan = report.controls.copy()
        elif prev_plan is not None and prev_plan.shape[0] > 1:
            # shift the previous plan one node forward
            prev_plan = prev_plan[1:]
            commanded = prev_plan[0].reshape(m, 3).copy()
        else:
            commanded = np.zeros((m, 3))

        executed = np.empty_like(commanded)
        for i in range(m):
            corrupted = gates_corrupt(commanded[i], setup.errors, gates_rngs[i])
            # a skipped burn is exactly zero; the draws are still consumed
            executed[i] = corrupted if np.any(commanded[i]) else 0.0

        x_plus = apply_stack_impulse(truth, executed.ravel())
        try:
            res = propagate(x_plus, node_times[j], node_times[j + 1],
                            truth_field, options=setup.ctx.options, dense=True)
        except PropagationError:
            failed = True
            revs.append(RevolutionRecord(
                revolution=j, status="propagation-failure",
                iterations=0, solves=0, planned_cost=np.nan,
                executed=executed, commanded=commanded, fallback=True,
                estimate=estimate, truth=truth.copy()))
            break

        tgrid = np.linspace(node_times[j], node_times[j + 1],
                            setup.trace_per_revolution + 1)
        if j > 0:
            tgrid = tgrid[1:]
        states = res.state_at(tgrid)  # (6m, n)
        seps = np.empty((tgrid.size, pairs.q))
        rels = np.empty((tgrid.size, pairs.q, 3))
        for it, t in enumerate(tgrid):
            X = states[:, it]
            rot = frame_rotation(setup.ctx.ceph.provider,
                                 t * setup.ctx.ceph.scales.tu).matrix
            for p, (a, b) in enumerate(pairs.pairs):
                d = X[6 * a:6 * a + 3] - X[6 * b:6 * b + 3]
                seps[it, p] = np.linalg.norm(d)
                rels[it, p] = rot @ d
        times_list.append(tgrid)
        range_list.append(seps)
        rel_list.append(rels)

        revs.append(RevolutionRecord(
            revolution=j, status=report.status, iterations=report.iterations,
            solves=report.solves, planned_cost=report.control_cost,
            executed=executed, commanded=commanded, fallback=fallback,
            estimate=estimate, truth=truth.copy()))
        truth = res.state

    times = np.concatenate(times_list) if times_list else np.zeros(0)
    ranges = np.vstack(range_list) if range_list else np.zeros((0, pairs.q))
    rels = np.vstack(rel_list) if rel_list else np.zeros((0, pairs.q, 3))

    # raw-bound violation scan on the recorded trace
    if times.size:
        report_v = _scan_ranges(times, ranges, setup.bounds, pairs)
    else:
        report_v = pathcon.ViolationReport(0.0, [], 0)

    return SampleRecord(sample=sample, times=times, ranges=ranges,
                        rel_positions=rels, revolutions=revs,
                        violation=report_v, failed=failed)


def _scan_ranges(times: np.ndarray, ranges: np.ndarray,
                 bounds: pathcon.SeparationBounds,
                 pairs: pathcon.PairIndex) -> pathcon.ViolationReport:
    """Raw-band scan over precomputed separation traces."""
    intervals = []
    worst = 0.0
    for p, pair in enumerate(pairs.pairs):
        for bound, depth in (("min", bounds.dr_min - ranges[:, p]),
                             ("max", ranges[:, p] - bounds.dr_max)):
            bad = depth > 0.0
            if not bad.any():
                continue
            start = None
            for it in range(times.size):
                if bad[it] and start is None:
                    start = it
                if start is not None and (not bad[it] or it == times.size - 1):
                    stop = it if bad[it] else it - 1
                    intervals.append(pathcon.ViolationInterval(
                        pair=pair, bound=bound, t_enter=float(times[start]),
                        t_exit=float(times[stop]),
                        worst=float(depth[start:stop + 1].max())))
                    start = None
            worst = max(worst, float(depth.max()))
    return pathcon.ViolationReport(max_violation=worst, intervals=intervals,
                                   samples=int(times.size))


@dataclass
class CampaignResult:
    setup: CampaignSetup
    records: list[SampleRecord]

    @property
    def sample_violation_fraction(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.any_violation for r in self.records) / len(self.records)

    @property
    def revolution_violation_fraction(self) -> float:
        node_times = self.setup.schedule.times[
            :self.setup.formation.revolutions + 1]
        total = len(self.records) * self.setup.formation.revolutions
        if total == 0:
            return 0.0
        bad = sum(len(r.violated_revolutions(node_times)) for r in self.records)
        return bad / total


def run_campaign(setup: CampaignSetup, workers: int = 1) -> CampaignResult:
    """All samples; deterministic ordering regardless of worker count."""
    indices = list(range(setup.formation.samples))
    if workers <= 1:
        records = [run_sample(setup, s) for s in indices]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_sample_star,
                                    [(setup, s) for s in indices]))
    records.sort(key=lambda r: r.sample)
    return CampaignResult(setup=setup, records=records)


def _run_sample_star(args):
    return run_sample(*args)


# ---------------------------------------------------------------------------
# campaign outputs


def fmt(x: float) -> str:
    return f"{x:.17g}"


def write_outputs(result: CampaignResult, out_dir, config_echo: dict | None = None):
    """Write ranges.csv, controls.csv, reltraj.csv, violations.json,
    summary.json under out_dir."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    setup = result.setup
    sc = setup.ctx.ceph.scales
    pairs = pathcon.PairIndex(setup.formation.m)

    with open(out / "ranges.csv", "w", encoding="utf-8") as fh:
        fh.write("t_s,sample,pair,separation_km\n")
        for rec in result.records:
            for p, pair in enumerate(pairs.pairs):
                tag = f"{pair[0]}-{pair[1]}"
                for t, sep in zip(rec.times, rec.ranges[:, p]):
                    fh.write(f"{fmt(t * sc.tu)},{rec.sample},{tag},"
                             f"{fmt(sep * sc.du)}\n")

    with open(out / "controls.csv", "w", encoding="utf-8") as fh:
        fh.write("sample,revolution,vehicle,dv_x_mms,dv_y_mms,dv_z_mms,"
                 "dv_mag_mms\n")
        to_mms = sc.vu * 1e6
        for rec in result.records:
            for rev in rec.revolutions:
                for i in range(setup.formation.m):
                    dv = rev.executed[i] * to_mms
                    fh.write(f"{rec.sample},{rev.revolution},{i},"
                             f"{fmt(dv[0])},{fmt(dv[1])},{fmt(dv[2])},"
                             f"{fmt(np.linalg.norm(dv))}\n")

    with open(out / "reltraj.csv", "w", encoding="utf-8") as fh:
        fh.write("t_s,sample,pair,dx_km,dy_km,dz_km\n")
        for rec in result.records:
            for p, pair in enumerate(pairs.pairs):
                tag = f"{pair[0]}-{pair[1]}"
                for it, t in enumerate(rec.times):
                    d = rec.rel_positions[it, p] * sc.du
                    fh.write(f"{fmt(t * sc.tu)},{rec.sample},{tag},"
                             f"{fmt(d[0])},{fmt(d[1])},{fmt(d[2])}\n")

    violations = {
        "schema_version": SCHEMA_VERSION,
        "samples": [
            {"sample": rec.sample, "failed": rec.failed,
             "violation": _scaled_violation_dict(rec.violation, sc)}
            for rec in result.records
        ],
    }
    with open(out / "violations.json", "w", encoding="utf-8") as fh:
        json.dump(violations, fh, indent=1, sort_keys=True)

    n_rev = setup.formation.revolutions
    dv_by_rev = [[] for _ in range(n_rev)]
    iters = []
    fallbacks = 0
    for rec in result.records:
        for rev in rec.revolutions:
            mags = np.linalg.norm(rev.executed, axis=1) * sc.vu * 1e6
            dv_by_rev[rev.revolution].extend(mags.tolist())
            iters.append(rev.iterations)
            fallbacks += bool(rev.fallback)
    dv_stats = []
    for j in range(n_rev):
        arr = np.array(dv_by_rev[j]) if dv_by_rev[j] else np.zeros(1)
        dv_stats.append({"revolution": j,
                         "mean_mms": float(arr.mean()),
                         "p95_mms": float(np.percentile(arr, 95.0)),
                         "max_mms": float(arr.max()),
                         "std_mms": float(arr.std())})

    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": setup.formation.mode,
        "samples": setup.formation.samples,
        "revolutions": n_rev,
        "vehicles": setup.formation.m,
        "seed": setup.seed,
        "node_times_s": [float(t * sc.tu) for t in
                         setup.schedule.times[:n_rev + setup.horizon_nodes]],
        "sample_violation_fraction": result.sample_violation_fraction,
        "revolution_violation_fraction": result.revolution_violation_fraction,
        "failed_samples": sum(r.failed for r in result.records),
        "fallback_count": fallbacks,
        "scp_iterations_mean": float(np.mean(iters)) if iters else 0.0,
        "scp_iterations_max": int(np.max(iters)) if iters else 0,
        "dv_per_revolution": dv_stats,
        "bounds_km": {
            "dr_min": setup.bounds.dr_min * sc.du,
            "dr_max": setup.bounds.dr_max * sc.du,
            "delta_min": setup.bounds.delta_min * sc.du,
            "delta_max": setup.bounds.delta_max * sc.du,
            "kappa_per_du": setup.bounds.kappa,
            "alpha": setup.bounds.alpha,
        },
        "du_km": sc.du,
    }
    if config_echo:
        summary["config"] = config_echo
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return out


def _scaled_violation_dict(report: pathcon.ViolationReport, sc) -> dict:
    d = report.to_dict()
    d["max_violation_km"] = d.pop("max_violation") * sc.du
    for iv in d["intervals"]:
        iv["worst_km"] = iv.pop("worst") * sc.du
        iv["t_enter_s"] = iv.pop("t_enter") * sc.tu
        iv["t_exit_s"] = iv.pop("t_exit") * sc.tu
    return d
