"""Command-line front end.

    lpoform run        --config scenario.yaml --mode continuous --samples 20
    lpoform solve-once --config scenario.yaml --dump-subproblem sp.txt
    lpoform check      --config scenario.yaml

All randomness flows from the configured seed; outputs are byte-identical
across reruns of the same configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import mvgp, pathcon, scp, sim, socp
from .exceptions import ConfigError, LpoformError


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="scenario YAML; defaults apply when omitted")
    p.add_argument("--mode", choices=["none", "node", "continuous"],
                   help="separation constraint mode override")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")
    p.add_argument("--revolutions", type=int, help="revolutions to simulate")
    p.add_argument("--seed", type=int, help="campaign RNG seed")
    p.add_argument("--workers", type=int, help="parallel sample workers")
    p.add_argument("--out", help="output directory")
    p.add_argument("--verbose", action="store_true",
                   help="per-iteration solver log (JSON lines)")


def _overrides(args) -> dict:
    sim_over = {}
    for key, attr in (("mode", "mode"), ("samples", "samples"),
                      ("revolutions", "revolutions"), ("seed", "seed"),
                      ("workers", "workers"), ("out_dir", "out")):
        val = getattr(args, attr, None)
        if val is not None:
            sim_over[key] = val
    over = {"sim": sim_over} if sim_over else {}
    if getattr(args, "verbose", False):
        over.setdefault("scp", {})["verbose"] = True
    return over


def _load(args):
    cfg = cfgmod.load_config(args.config, _overrides(args))
    return cfg, cfgmod.build_scenario(cfg)


def cmd_run(args) -> int:
    try:
        cfg, scn = _load(args)
        revolutions = int(cfg["sim"]["revolutions"])
        baseline = cfgmod.acquire_baseline(
            scn, revolutions + scn.horizon_nodes + 1)
        setup = cfgmod.build_campaign(scn, baseline)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    result = sim.run_campaign(setup, workers=int(cfg["sim"]["workers"]))
    import copy
    echo = copy.deepcopy(cfg)
    echo["sim"].pop("out_dir", None)   # keep outputs path-independent
    out = sim.write_outputs(result, cfg["sim"]["out_dir"], config_echo=echo)

    print(f"campaign: mode={setup.formation.mode} samples="
          f"{setup.formation.samples} revolutions={setup.formation.revolutions}")
    print(f"violation fraction (samples):     {result.sample_violation_fraction:.3f}")
    print(f"violation fraction (revolutions): {result.revolution_violation_fraction:.3f}")
    sc = scn.scales
    for j in range(setup.formation.revolutions):
        mags = [np.linalg.norm(rev.executed, axis=1) * sc.vu * 1e6
                for rec in result.records for rev in rec.revolutions
                if rev.revolution == j]
        if mags:
            arr = np.concatenate(mags)
            print(f"revolution {j}: mean dv {arr.mean():9.3f} mm/s, "
                  f"p95 {np.percentile(arr, 95):9.3f} mm/s")
    iters = [rev.iterations for rec in result.records for rev in rec.revolutions]
    print(f"scp iterations: mean {np.mean(iters):.1f}, max {max(iters)}")
    print(f"outputs in {out}")

    if any(rec.failed for rec in result.records):
        print(f"{sum(r.failed for r in result.records)} sample(s) failed",
              file=sys.stderr)
        return 2
    return 0


def cmd_solve_once(args) -> int:
    try:
        cfg, scn = _load(args)
        baseline = cfgmod.acquire_baseline(scn, scn.horizon_nodes + 1)
        from .baseline import schedule_nodes
        horizon = schedule_nodes(baseline, baseline.validity[0],
                                 scn.theta_man, scn.horizon_nodes)
        formation = sim.FormationConfig.two_vehicle_default(
            scn.bounds.dr_min, revolutions=1,
            mode=str(cfg["sim"]["mode"]),
            hierarchical=bool(cfg["sim"]["hierarchical"]))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    # deterministic single solve: offsets applied, zero noise
    x_b = baseline.state_at(horizon.times[0])
    x0 = np.concatenate([x_b + off for off in formation.offsets])
    inst = mvgp.build_instance(
        scn.ctx, baseline, horizon, x0, eps_r=scn.eps_r, eps_v=scn.eps_v,
        bounds=scn.bounds, mode=formation.mode, eps_licq=scn.eps_licq)

    if args.dump_subproblem:
        ref = mvgp.ballistic_reference(inst)
        lam = np.zeros((inst.n_nodes - 1, inst.naug))
        spb = mvgp.assemble_subproblem(inst, ref, lam, scn.scp_options.w0,
                                       scn.scp_options.tr_init)
        Path(args.dump_subproblem).write_text(spb.to_conic_dump(),
                                              encoding="utf-8")
        print(f"wrote conic dump to {args.dump_subproblem}")

    backend = socp.make_backend(scn.backend_name)
    report = scp.scp_solve(inst, backend, scn.scp_options)
    sc = scn.scales
    print(f"status: {report.status} after {report.iterations} iterations "
          f"({report.solves} subproblem solves)")
    print(f"total planned dv: {report.control_cost * sc.vu * 1e6:.3f} mm/s")
    print(f"max re-propagated defect: {report.max_defect:.3e} canonical")
    if args.verbose:
        for rec in report.history:
            print(json.dumps(rec))
    if not report.converged:
        return 2
    return 0


def cmd_check(args) -> int:
    problems = []
    try:
        cfg, scn = _load(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    b = scn.bounds
    sc = scn.scales
    print(f"scales: du {sc.du} km, vu {sc.vu:.6f} km/s, tu {sc.tu:.1f} s")
    lo = (b.dr_min + b.delta_min) * sc.du
    hi = (b.dr_max - b.delta_max) * sc.du
    if lo >= hi:
        problems.append(
            f"tightened band empty: dr_min+delta_min={lo:.1f} km >= "
            f"dr_max-delta_max={hi:.1f} km")
    else:
        print(f"tightened band non-empty: [{lo:.1f}, {hi:.1f}] km at saturation")

    try:
        revolutions = int(cfg["sim"]["revolutions"])
        baseline = cfgmod.acquire_baseline(scn, revolutions + scn.horizon_nodes + 1)
        gaps = np.diff(baseline.times)
        if gaps.max() > baseline.period / 4.0:
            problems.append(
                f"baseline has a time gap of {gaps.max() * sc.tu / 86400.0:.2f} "
                "days (more than a quarter period)")
        err = baseline.verify_interpolation(scn.single_field())
        print(f"baseline: {baseline.times.size} samples over "
              f"{(baseline.validity[1] - baseline.validity[0]) / baseline.period:.1f} "
              f"revolutions, interpolation check {err * sc.du * 1e3:.3f} m")
        from .baseline import schedule_nodes
        sched = schedule_nodes(baseline, baseline.validity[0], scn.theta_man,
                               revolutions + scn.horizon_nodes)
        gaps_d = np.diff(sched.times) * sc.tu / 86400.0
        print(f"nodes: {sched.n_nodes}, gaps {gaps_d.min():.3f} to "
              f"{gaps_d.max():.3f} days")
    except LpoformError as exc:
        problems.append(str(exc))

    if problems:
        for p in problems:
            print(f"FAIL: {p}", file=sys.stderr)
        return 1
    print("configuration ok")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lpoform",
        description="Formation-flight guidance simulation on libration "
                    "point orbits")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte Carlo campaign")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_once = sub.add_parser("solve-once",
                            help="deterministic single guidance solve")
    _add_common(p_once)
    p_once.add_argument("--dump-subproblem", metavar="PATH",
                        help="write the first convex subproblem as a text dump")
    p_once.set_defaults(func=cmd_solve_once)

    p_check = sub.add_parser("check", help="validate configuration and baseline")
    _add_common(p_check)
    p_check.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LpoformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
