"""Schema-checked readers for campaign output directories."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import SUPPORTED_SCHEMA, SchemaError

RANGES_COLUMNS = ["t_s", "sample", "pair", "separation_km"]
CONTROLS_COLUMNS = ["sample", "revolution", "vehicle", "dv_x_mms", "dv_y_mms",
                    "dv_z_mms", "dv_mag_mms"]
RELTRAJ_COLUMNS = ["t_s", "sample", "pair", "dx_km", "dy_km", "dz_km"]


def read_summary(campaign_dir) -> dict:
    path = Path(campaign_dir) / "summary.json"
    if not path.exists():
        raise SchemaError(f"no summary.json in {campaign_dir}")
    with open(path, encoding="utf-8") as fh:
        summary = json.load(fh)
    version = summary.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise SchemaError(
            f"summary.json schema_version {version!r}, supported "
            f"{SUPPORTED_SCHEMA}")
    return summary


def _read_csv(path, expected_columns) -> dict[str, np.ndarray]:
    if not Path(path).exists():
        raise SchemaError(f"missing campaign file {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_columns:
            raise SchemaError(
                f"{Path(path).name} columns {header}, expected "
                f"{expected_columns}")
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for idx, name in enumerate(expected_columns):
        values = [row[idx] for row in rows]
        if name in ("sample", "revolution", "vehicle"):
            out[name] = np.array(values, dtype=int)
        elif name == "pair":
            out[name] = np.array(values, dtype=object)
        else:
            out[name] = np.array(values, dtype=float)
    return out


def read_ranges(campaign_dir):
    return _read_csv(Path(campaign_dir) / "ranges.csv", RANGES_COLUMNS)


def read_controls(campaign_dir):
    return _read_csv(Path(campaign_dir) / "controls.csv", CONTROLS_COLUMNS)


def read_reltraj(campaign_dir):
    return _read_csv(Path(campaign_dir) / "reltraj.csv", RELTRAJ_COLUMNS)
