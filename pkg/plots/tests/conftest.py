import json
import math
from pathlib import Path

import numpy as np
import pytest


def build_campaign_dir(root: Path, samples=20, revolutions=5,
                       schema_version=1, trace=60) -> Path:
    """Synthetic campaign directory matching the output contract at desk
    scale: ranges/controls/reltraj CSVs plus summary and violations JSON."""
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(99)
    rev_s = 6.559 * 86400.0
    nodes = [j * rev_s for j in range(revolutions + 6)]

    with open(root / "ranges.csv", "w") as fh:
        fh.write("t_s,sample,pair,separation_km\n")
        for s in range(samples):
            phase = rng.uniform(0.0, math.pi)
            for i in range(revolutions * trace):
                t = i / (revolutions * trace) * revolutions * rev_s
                sep = 40.0 + 140.0 * abs(math.sin(2.0 * math.pi * t / rev_s
                                                  + phase))
                fh.write(f"{t},{s},0-1,{sep + rng.normal() * 2.0}\n")

    with open(root / "controls.csv", "w") as fh:
        fh.write("sample,revolution,vehicle,dv_x_mms,dv_y_mms,dv_z_mms,"
                 "dv_mag_mms\n")
        for s in range(samples):
            for j in range(revolutions):
                scale = 60.0 if j == 0 else 8.0
                for veh in range(2):
                    v = rng.normal(size=3) * scale
                    fh.write(f"{s},{j},{veh},{v[0]},{v[1]},{v[2]},"
                             f"{np.linalg.norm(v)}\n")

    with open(root / "reltraj.csv", "w") as fh:
        fh.write("t_s,sample,pair,dx_km,dy_km,dz_km\n")
        for s in range(min(samples, 3)):
            for i in range(revolutions * trace):
                t = i / (revolutions * trace) * revolutions * rev_s
                ang = 2.0 * math.pi * t / rev_s
                fh.write(f"{t},{s},0-1,{60 * math.cos(ang)},"
                         f"{45 * math.sin(ang)},{20 * math.sin(2 * ang)}\n")

    summary = {
        "schema_version": schema_version,
        "mode": "continuous",
        "samples": samples,
        "revolutions": revolutions,
        "vehicles": 2,
        "seed": 7,
        "node_times_s": nodes,
        "sample_violation_fraction": 0.1,
        "revolution_violation_fraction": 0.04,
        "failed_samples": 0,
        "fallback_count": 0,
        "scp_iterations_mean": 20.0,
        "scp_iterations_max": 40,
        "dv_per_revolution": [],
        "bounds_km": {"dr_min": 10.0, "dr_max": 200.0, "delta_min": 10.0,
                      "delta_max": 25.0, "kappa_per_du": 1e5, "alpha": 2.0},
        "du_km": 384400.0,
    }
    (root / "summary.json").write_text(json.dumps(summary, indent=1))
    (root / "violations.json").write_text(
        json.dumps({"schema_version": schema_version, "samples": []}))
    return root


@pytest.fixture(scope="session")
def campaign_dir(tmp_path_factory):
    return build_campaign_dir(tmp_path_factory.mktemp("campaign") / "out")
