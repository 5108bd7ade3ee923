import hashlib
from pathlib import Path

import pytest

from conftest import build_campaign_dir

from lpoform_plots import SchemaError, figures, io
from lpoform_plots.cli import main


def _digest_dir(path: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(path.iterdir())}


class TestFigures:
    @pytest.mark.parametrize("name", ["bounds", "ranges", "controls"])
    def test_figure_renders(self, campaign_dir, tmp_path, name):
        out = tmp_path / f"{name}.png"
        figures.FIGURES[name](campaign_dir, out)
        assert out.exists() and out.stat().st_size > 5000

    def test_reltraj_renders_and_unknown_sample(self, campaign_dir, tmp_path):
        out = tmp_path / "reltraj.png"
        figures.plot_reltraj(campaign_dir, out, sample=1)
        assert out.exists() and out.stat().st_size > 5000
        with pytest.raises(LookupError):
            figures.plot_reltraj(campaign_dir, tmp_path / "x.png", sample=999)

    def test_deterministic_regeneration(self, campaign_dir, tmp_path):
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        figures.plot_ranges(campaign_dir, a)
        figures.plot_ranges(campaign_dir, b)
        assert a.read_bytes() == b.read_bytes()

    def test_inputs_never_mutated(self, campaign_dir, tmp_path):
        before = _digest_dir(Path(campaign_dir))
        for name, fn in figures.FIGURES.items():
            fn(campaign_dir, tmp_path / f"{name}.png")
        assert _digest_dir(Path(campaign_dir)) == before

    def test_bound_overlay_kappa_spread(self, campaign_dir):
        """Larger kappa saturates earlier: at an early horizon time the
        1e6 lower bound exceeds the 1e3 one (qualitative sweep check)."""
        summary = io.read_summary(campaign_dir)
        nodes = summary["node_times_s"]
        t_probe = nodes[0] + 0.1 * (nodes[-1] - nodes[0])
        lo_slow, _ = figures._tightened_bounds(summary, [t_probe], kappa=1e3)
        lo_fast, _ = figures._tightened_bounds(summary, [t_probe], kappa=1e6)
        assert lo_fast[0] > lo_slow[0]
        assert lo_fast[0] < summary["bounds_km"]["dr_min"] \
            + summary["bounds_km"]["delta_min"]


class TestSchema:
    def test_schema_version_mismatch(self, tmp_path):
        bad = build_campaign_dir(tmp_path / "bad", samples=2, revolutions=2,
                                 schema_version=2)
        with pytest.raises(SchemaError):
            io.read_summary(bad)
        assert main(["ranges", "--in", str(bad),
                     "--out", str(tmp_path / "r.png")]) == 1

    def test_missing_file(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(SchemaError):
            io.read_summary(empty)

    def test_wrong_columns(self, tmp_path):
        camp = build_campaign_dir(tmp_path / "cols", samples=2, revolutions=2)
        (camp / "ranges.csv").write_text("time,s,p,sep\n0,0,0-1,50\n")
        with pytest.raises(SchemaError):
            io.read_ranges(camp)


class TestCli:
    def test_single_figure(self, campaign_dir, tmp_path):
        out = tmp_path / "fig.png"
        assert main(["controls", "--in", str(campaign_dir),
                     "--out", str(out)]) == 0
        assert out.exists()

    def test_all_figures(self, campaign_dir, tmp_path):
        out = tmp_path / "figs"
        assert main(["all", "--in", str(campaign_dir),
                     "--out", str(out)]) == 0
        for name in ("bounds", "ranges", "controls", "reltraj"):
            assert (out / f"{name}.png").exists()

    def test_unknown_sample_exit(self, campaign_dir, tmp_path):
        assert main(["reltraj", "--in", str(campaign_dir), "--out",
                     str(tmp_path / "x.png"), "--sample", "77"]) == 1
