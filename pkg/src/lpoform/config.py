"""Scenario configuration: a single YAML document with every tuning knob,
physical units at the boundary, canonical units inside.

Unknown keys are rejected.  Defaults reproduce the benchmark scenario:
two vehicles on a generated near-rectilinear halo baseline, maneuvering at
180 degrees osculating anomaly with a 6-node horizon.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import constants, pathcon, scp, sim
from .baseline import BaselineOrbit, generate_baseline, schedule_nodes
from .dynamics import PropagateOptions, SingleField, SrpParams
from .ephemeris import (
    AnalyticEphemeris,
    CanonicalEphemeris,
    CanonicalScales,
    TabulatedEphemeris,
)
from .exceptions import ConfigError
from .mvgp import GuidanceContext

DEFAULTS: dict = {
    "name": "benchmark",
    "scales": {
        "du_km": constants.DEFAULT_DU_KM,
        "mu_moon_km3_s2": constants.MU_MOON,
    },
    "ephemeris": {
        "mode": "analytic",
        "table_path": None,
        "bodies": ["earth", "sun"],
        "earth_sma_km": constants.EARTH_MOON_DIST_KM,
        "earth_ecc": 0.0,
        "mu_earth_km3_s2": constants.MU_EARTH,
        "mu_sun_km3_s2": constants.MU_SUN,
        "au_km": constants.AU_KM,
        "sun_phase0_deg": 0.0,
    },
    "srp": {
        "enabled": True,
        "p_sun_n_m2": constants.P_SUN_N_M2,
        "c_r": 1.3,
        "area_to_mass_m2_kg": 0.01,
    },
    "baseline": {
        "source": "generate",       # generate | file
        "path": None,
        "cache": None,
        "seed_table": None,         # defaults to the bundled NRHO table
        "defect_tol": 1e-9,
        "tube_km": 2000.0,
    },
    "mvgp": {
        "theta_man_deg": 180.0,
        "horizon_nodes": 6,
        "eps_r_km": 20.0,
        "eps_r_hierarchical_km": 30.0,
        "eps_v_ms": 5.0,
        "dr_min_km": 10.0,
        "delta_min_km": 10.0,
        "dr_max_km": 200.0,
        "delta_max_km": 25.0,
        "kappa_per_du": 1.0e5,
        "alpha": 2.0,
        "slack_scale_rel": 0.05,   # residual scale in the slack integrand, x DU
        "eps_licq": 1.0e-6,
    },
    "scp": {
        "rho0": 0.0,
        "rho1": 0.25,
        "rho2": 0.7,
        "tr_shrink": 0.5,
        "tr_grow": 2.0,
        "tr_init": 0.1,
        "tr_min": 1e-8,
        "tr_max": 10.0,
        "w0": 1e2,
        "beta": 2.0,
        "beta_stall": 10.0,
        "w_max": 1e9,
        "al_eta_shrink": 0.25,
        "stationary_tol": 0.1,
        "stationary_kick": 1.0,
        "nonmonotone": 5,
        "prox_weight": 1.0,
        "polish_gate": 1e-3,
        "polish_tr": 1e-5,
        "polish_tr_max": 1e-3,
        "tol_feas": 1e-7,
        "tol_feas_slack": 1e-6,
        "tol_opt": 1e-6,
        "max_iter": 100,
        "verbose": False,
    },
    "errors": {
        "r0_3sigma_km": 1.0,
        "v0_3sigma_cms": 1.0,
        "nav_r_3sigma_km": 0.1,
        "nav_v_3sigma_cms": 1.0,
        "rel_3sigma_pct": 1.5,
        "abs_3sigma_mms": 1.42,
        "dir_3sigma_deg": 0.5,
    },
    "sim": {
        "mode": "continuous",       # none | node | continuous
        "hierarchical": False,
        "vehicles": 2,
        "samples": 20,
        "revolutions": 5,
        "seed": 7,
        "workers": 1,
        "trace_per_revolution": 240,
        "out_dir": "out",
    },
    "propagation": {
        "rtol": 1e-11,
        "atol": 1e-12,
    },
    "solver": {
        "backend": "clarabel",
    },
}


def _merge(base: dict, override: dict, path: str = ""):
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            _merge(base[key], val, where)
        else:
            base[key] = val


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, overlaid by a YAML file, overlaid by explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"config root must be a mapping, got {type(doc)}")
        _merge(cfg, doc)
    if overrides:
        _merge(cfg, overrides)
    return cfg


@dataclass
class Scenario:
    """Config resolved to canonical-unit objects."""

    cfg: dict
    scales: CanonicalScales
    provider: object
    ceph: CanonicalEphemeris
    srp: SrpParams
    ctx: GuidanceContext
    bounds: pathcon.SeparationBounds
    eps_r: float
    eps_v: float
    eps_r_hier: float
    eps_licq: float
    theta_man: float
    horizon_nodes: int
    scp_options: scp.ScpOptions
    errors: sim.ErrorConfig
    backend_name: str

    def single_field(self) -> SingleField:
        return SingleField(self.ceph, self.srp)


def build_scenario(cfg: dict) -> Scenario:
    s = cfg["scales"]
    scales = CanonicalScales(du=float(s["du_km"]),
                             mu_moon=float(s["mu_moon_km3_s2"]))

    e = cfg["ephemeris"]
    if e["mode"] == "analytic":
        provider = AnalyticEphemeris(
            mu_earth=float(e["mu_earth_km3_s2"]),
            mu_moon=float(s["mu_moon_km3_s2"]),
            mu_sun=float(e["mu_sun_km3_s2"]),
            earth_sma=float(e["earth_sma_km"]),
            earth_ecc=float(e["earth_ecc"]),
            au=float(e["au_km"]),
            sun_phase0=math.radians(float(e["sun_phase0_deg"])),
            bodies=tuple(e["bodies"]),
        )
    elif e["mode"] == "tabulated":
        if not e["table_path"]:
            raise ConfigError("tabulated ephemeris requires ephemeris.table_path")
        provider = TabulatedEphemeris.from_csv(
            e["table_path"],
            mus={"earth": float(e["mu_earth_km3_s2"]),
                 "sun": float(e["mu_sun_km3_s2"])})
    else:
        raise ConfigError(f"unknown ephemeris mode {e['mode']!r}")
    ceph = CanonicalEphemeris(provider, scales)

    sp = cfg["srp"]
    srp = SrpParams.from_physical(
        scales, p_sun_n_m2=float(sp["p_sun_n_m2"]), c_r=float(sp["c_r"]),
        area_to_mass_m2_kg=float(sp["area_to_mass_m2_kg"]),
        au_km=float(e["au_km"]), enabled=bool(sp["enabled"]))

    p = cfg["propagation"]
    ctx = GuidanceContext(ceph=ceph, srp=srp,
                          options=PropagateOptions(rtol=float(p["rtol"]),
                                                   atol=float(p["atol"])))

    g = cfg["mvgp"]
    try:
        bounds = pathcon.SeparationBounds(
            dr_min=float(g["dr_min_km"]) / scales.du,
            dr_max=float(g["dr_max_km"]) / scales.du,
            delta_min=float(g["delta_min_km"]) / scales.du,
            delta_max=float(g["delta_max_km"]) / scales.du,
            kappa=float(g["kappa_per_du"]),
            alpha=float(g["alpha"]),
            slack_scale=float(g["slack_scale_rel"]) * scales.du,
        )
    except ValueError as exc:
        raise ConfigError(f"separation bounds invalid: {exc}") from exc

    c = cfg["scp"]
    scp_options = scp.ScpOptions(**{k: (bool(v) if k == "verbose" else
                                        int(v) if k in ("max_iter", "nonmonotone")
                                        else float(v))
                                    for k, v in c.items()})

    er = cfg["errors"]
    errors = sim.ErrorConfig.from_physical_3sigma(
        scales,
        r0_km=float(er["r0_3sigma_km"]), v0_cms=float(er["v0_3sigma_cms"]),
        r_nav_km=float(er["nav_r_3sigma_km"]),
        v_nav_cms=float(er["nav_v_3sigma_cms"]),
        rel_pct=float(er["rel_3sigma_pct"]),
        abs_mms=float(er["abs_3sigma_mms"]),
        dir_deg=float(er["dir_3sigma_deg"]))

    return Scenario(
        cfg=cfg, scales=scales, provider=provider, ceph=ceph, srp=srp,
        ctx=ctx, bounds=bounds,
        eps_r=float(g["eps_r_km"]) / scales.du,
        eps_v=float(g["eps_v_ms"]) * 1e-3 / scales.vu,
        eps_r_hier=float(g["eps_r_hierarchical_km"]) / scales.du,
        eps_licq=float(g["eps_licq"]),
        theta_man=math.radians(float(g["theta_man_deg"])),
        horizon_nodes=int(g["horizon_nodes"]),
        scp_options=scp_options, errors=errors,
        backend_name=str(cfg["solver"]["backend"]))


def acquire_baseline(scn: Scenario, revolutions_needed: int) -> BaselineOrbit:
    """Load the configured baseline file or generate one from the bundled
    seed, with optional on-disk caching of the generated product."""
    b = scn.cfg["baseline"]
    field = scn.single_field()
    if b["source"] == "file":
        if not b["path"] or not Path(b["path"]).exists():
            raise ConfigError(f"baseline file not found: {b['path']!r}")
        orbit = BaselineOrbit.from_csv(b["path"], scn.scales)
        orbit.verify_interpolation(field)
        return orbit
    if b["source"] != "generate":
        raise ConfigError(f"unknown baseline source {b['source']!r}")

    cache = b["cache"]
    if cache and Path(cache).exists():
        orbit = BaselineOrbit.from_csv(cache, scn.scales)
        if orbit.validity[1] - orbit.validity[0] >= \
                (revolutions_needed - 0.01) * orbit.period:
            return orbit

    seed = None
    if b["seed_table"]:
        from .baseline import load_state_csv
        seed = load_state_csv(b["seed_table"])
    orbit = generate_baseline(scn.ceph, field, revolutions_needed, seed=seed,
                              defect_tol=float(b["defect_tol"]),
                              tube_km=float(b["tube_km"]))
    if cache:
        save_baseline_csv(orbit, scn.scales, cache)
    return orbit


def save_baseline_csv(orbit: BaselineOrbit, scales: CanonicalScales, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms\n")
        for t, x in zip(orbit.times, orbit.states):
            phys = scales.unscale_state(x)
            fh.write(f"{t * scales.tu:.17g}," +
                     ",".join(f"{v:.17g}" for v in phys) + "\n")


def build_campaign(scn: Scenario, baseline: BaselineOrbit) -> sim.CampaignSetup:
    sm = scn.cfg["sim"]
    g = scn.cfg["mvgp"]
    formation = sim.FormationConfig.two_vehicle_default(
        scn.bounds.dr_min, revolutions=int(sm["revolutions"]),
        samples=int(sm["samples"]), mode=str(sm["mode"]),
        hierarchical=bool(sm["hierarchical"]))
    if int(sm["vehicles"]) != 2:
        raise ConfigError("only the two-vehicle default formation is bundled; "
                          "larger formations need explicit offsets via the API")
    n_nodes = formation.revolutions + scn.horizon_nodes
    schedule = schedule_nodes(baseline, baseline.validity[0], scn.theta_man,
                              n_nodes)
    return sim.CampaignSetup(
        ctx=scn.ctx, baseline=baseline, schedule=schedule,
        horizon_nodes=scn.horizon_nodes, formation=formation,
        bounds=scn.bounds, eps_r=scn.eps_r, eps_v=scn.eps_v,
        eps_r_hier=scn.eps_r_hier, eps_licq=scn.eps_licq, errors=scn.errors,
        scp_options=scn.scp_options, backend_name=scn.backend_name,
        seed=int(sm["seed"]),
        trace_per_revolution=int(sm["trace_per_revolution"]))
