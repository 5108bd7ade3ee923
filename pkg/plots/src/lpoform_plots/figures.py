"""The four campaign figures: tightened-bound sweep, range histories,
executed-maneuver distributions, and rotating-frame relative trajectories.

All figures are regenerated deterministically from the same inputs and
never modify the campaign directory.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import io  # noqa: E402

_SAVE_KW = dict(dpi=130, metadata={"Software": "lpoform-plots"})


def _tightened_bounds(summary, t_s, kappa=None):
    """Lower/upper tightened separation bounds over the first horizon."""
    b = summary["bounds_km"]
    du = summary["du_km"]
    nodes = np.asarray(summary["node_times_s"], dtype=float)
    t0, t1 = nodes[0], nodes[-1]
    kappa = b["kappa_per_du"] if kappa is None else kappa
    tau = np.clip((np.asarray(t_s) - t0) / (t1 - t0), 0.0, 1.0)

    def zeta(delta_km):
        delta = delta_km / du
        return (delta - 1.0 / (kappa * tau + 1.0 / delta)) * du

    lower = b["dr_min"] + zeta(b["delta_min"])
    upper = b["dr_max"] - zeta(b["delta_max"])
    return lower, upper


def plot_bounds(campaign_dir, out_path, kappas=(1e3, 1e4, 1e5, 1e6)):
    """Tightened-bound curves for a sweep of the tuning rate kappa."""
    summary = io.read_summary(campaign_dir)
    nodes = np.asarray(summary["node_times_s"], dtype=float)
    t = np.linspace(nodes[0], nodes[-1], 600)
    days = (t - nodes[0]) / 86400.0

    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = plt.cm.viridis(np.linspace(0.15, 0.85, len(kappas)))
    for kappa, color in zip(kappas, colors):
        lower, upper = _tightened_bounds(summary, t, kappa=kappa)
        ax.plot(days, lower, color=color, label=f"kappa = {kappa:g}")
        ax.plot(days, upper, color=color, linestyle="--")
    b = summary["bounds_km"]
    ax.axhline(b["dr_min"], color="k", lw=0.8, alpha=0.5)
    ax.axhline(b["dr_max"], color="k", lw=0.8, alpha=0.5)
    ax.set_xlabel("time past horizon start, days")
    ax.set_ylabel("separation bound, km")
    ax.set_yscale("log")
    ax.set_title("time-dependent separation bounds")
    ax.legend(loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return Path(out_path)


def plot_ranges(campaign_dir, out_path):
    """Per-sample inter-spacecraft range traces with bound overlays."""
    summary = io.read_summary(campaign_dir)
    data = io.read_ranges(campaign_dir)
    nodes = np.asarray(summary["node_times_s"], dtype=float)
    b = summary["bounds_km"]

    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    keys = sorted(set(zip(data["sample"].tolist(), data["pair"].tolist())))
    for sample, pair in keys:
        mask = (data["sample"] == sample) & (data["pair"] == pair)
        t_days = (data["t_s"][mask] - nodes[0]) / 86400.0
        ax.plot(t_days, data["separation_km"][mask], lw=0.6, alpha=0.6,
                color="tab:blue")
    t_grid = np.linspace(nodes[0], data["t_s"].max() if data["t_s"].size
                         else nodes[-1], 400)
    lower, upper = _tightened_bounds(summary, t_grid)
    t_days = (t_grid - nodes[0]) / 86400.0
    ax.plot(t_days, lower, "r-", lw=1.2, label="tightened min")
    ax.plot(t_days, upper, "r--", lw=1.2, label="tightened max")
    ax.axhline(b["dr_min"], color="k", lw=0.8, ls=":", label="raw bounds")
    ax.axhline(b["dr_max"], color="k", lw=0.8, ls=":")
    executed = (np.asarray(summary["node_times_s"][:summary["revolutions"] + 1])
                - nodes[0]) / 86400.0
    ax.plot(executed, np.full(executed.size, b["dr_min"]), "ko", ms=3)
    ax.set_xlabel("time, days")
    ax.set_ylabel("inter-spacecraft range, km")
    ax.set_yscale("log")
    ax.set_title(f"range history, mode = {summary['mode']}, "
                 f"{summary['samples']} samples")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return Path(out_path)


def plot_controls(campaign_dir, out_path):
    """Executed maneuver magnitudes per revolution across the samples."""
    summary = io.read_summary(campaign_dir)
    data = io.read_controls(campaign_dir)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    revolutions = sorted(set(data["revolution"].tolist()))
    rng = np.random.default_rng(0)   # fixed jitter for determinism
    for rev in revolutions:
        mask = data["revolution"] == rev
        mags = data["dv_mag_mms"][mask]
        jitter = rng.uniform(-0.18, 0.18, size=mags.size)
        ax.plot(rev + jitter, np.maximum(mags, 1e-4), ".", ms=3, alpha=0.5,
                color="tab:blue")
        ax.plot([rev - 0.3, rev + 0.3],
                [np.median(mags)] * 2, "r-", lw=1.5)
    ax.set_xlabel("revolution")
    ax.set_ylabel("executed maneuver, mm/s")
    ax.set_yscale("log")
    ax.set_xticks(revolutions)
    ax.set_title(f"executed control magnitudes, mode = {summary['mode']}")
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return Path(out_path)


def plot_reltraj(campaign_dir, out_path, sample=0):
    """Rotating-frame relative trajectory of one Monte Carlo sample."""
    summary = io.read_summary(campaign_dir)
    data = io.read_reltraj(campaign_dir)
    mask = data["sample"] == sample
    if not np.any(mask):
        known = sorted(set(data["sample"].tolist()))
        raise LookupError(f"sample {sample} not in campaign (have {known})")

    fig = plt.figure(figsize=(6.5, 6))
    ax = fig.add_subplot(projection="3d")
    for pair in sorted(set(data["pair"][mask].tolist())):
        sel = mask & (data["pair"] == pair)
        ax.plot(data["dx_km"][sel], data["dy_km"][sel], data["dz_km"][sel],
                lw=0.8, label=f"pair {pair}")
    ax.scatter([0.0], [0.0], [0.0], color="k", s=15)
    ax.set_xlabel("x, km")
    ax.set_ylabel("y, km")
    ax.set_zlabel("z, km")
    ax.set_title(f"relative trajectory, sample {sample}, "
                 f"mode = {summary['mode']}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return Path(out_path)


FIGURES = {
    "bounds": plot_bounds,
    "ranges": plot_ranges,
    "controls": plot_controls,
    "reltraj": plot_reltraj,
}
